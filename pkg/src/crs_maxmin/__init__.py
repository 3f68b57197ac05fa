"""Max-min fair cooperative rate-splitting with user relaying in a MISO broadcast channel."""
from .baselines import Strategy, StrategyKind, solve
from .channel import ChannelRealization, SystemConfig, db_to_linear, generate_channels
from .harness import ExperimentReport, Scenario, emit_csv, emit_plot, load_scenario, run_scenario
from .rates import PrecoderSet, RateBreakdown, evaluate_solution, rate_breakdown
from .relay import (RelayGrouping, select_centralized, select_decentralized, select_optimal,
                    select_random)
from .sca import CRS, Mode, SCAFailure, Solution, sca_solve

__version__ = "0.1.0"
