"""Monte Carlo experiment driver.

A scenario fixes a base system, one sweep (SNR, user count or relay power),
the strategies and relay protocols to compare, and the number of trials.
Trial ``i`` draws channels with seed ``base_seed + i``; every strategy and
protocol at a given (sweep point, trial) sees that same draw.

Scenario files are YAML with these keys (defaults in brackets)::

    num_users: 3
    num_tx_antennas: 2
    snr_db: 20                 # BS power; ignored by an snr_db sweep
    bs_variances: [1, 0.3, 0.1] # [all ones]; ignored by a num_users sweep
    user_variance: 1.0         # variance of every user-to-user link
    relay_power_db: null       # [equal to the BS power]
    sweep: {kind: snr_db, values: [0, 10, 20]}   # or num_users / relay_power_db
    strategies: [CRS-SCA, NRS, SDMA]
    protocols: [1-best]        # optimal, 1-best, K/2-best, 1-random
    selection: centralized     # or decentralized
    trials: 10
    base_seed: 0
    record_timing: false       # fill the ms column with wall time
    sca_tolerance, grid_step, timer_constant, init_power_split, init_theta
"""
from __future__ import annotations

import csv
import io
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml

from . import relay as relay_mod
from .baselines import Strategy, solve
from .channel import SystemConfig, db_to_linear, generate_channels
from .rates import InfeasibleSplitError
from .sca import SCAFailure

log = logging.getLogger(__name__)

CSV_HEADER = ["sweep", "strategy", "protocol", "trial", "rate", "theta", "iters", "ms"]
PROTOCOLS = ("optimal", "1-best", "K/2-best", "1-random")
SWEEP_KINDS = ("snr_db", "num_users", "relay_power_db")
OUTPUT_ENV = "CRS_MAXMIN_OUTPUT_DIR"

_CONFIG_KEYS = ("sca_tolerance", "grid_step", "timer_constant", "init_power_split", "init_theta",
                "max_iterations")


class ScenarioError(ValueError):
    """Malformed scenario file or contents."""


@dataclass(frozen=True)
class Scenario:
    num_users: int
    num_tx_antennas: int
    sweep_kind: str
    sweep_values: Tuple[float, ...]
    strategies: Tuple[Strategy, ...]
    protocols: Tuple[str, ...]
    trials: int
    base_seed: int = 0
    snr_db: float = 20.0
    bs_variances: Optional[Tuple[float, ...]] = None
    user_variance: float = 1.0
    relay_power_db: Optional[float] = None
    selection: str = "centralized"
    record_timing: bool = False
    options: Tuple[Tuple[str, float], ...] = ()
    name: str = "scenario"

    def __post_init__(self):
        if self.sweep_kind not in SWEEP_KINDS:
            raise ScenarioError(f"sweep kind must be one of {SWEEP_KINDS}")
        if not self.sweep_values:
            raise ScenarioError("sweep needs at least one value")
        if not self.strategies or not self.protocols:
            raise ScenarioError("strategies and protocols must be nonempty")
        bad = [p for p in self.protocols if p not in PROTOCOLS]
        if bad:
            raise ScenarioError(f"unknown protocols {bad}; expected {PROTOCOLS}")
        if self.trials < 1:
            raise ScenarioError("trials must be positive")
        if self.selection not in ("centralized", "decentralized"):
            raise ScenarioError("selection must be 'centralized' or 'decentralized'")

    def config_at(self, value: float) -> SystemConfig:
        """SystemConfig for one sweep point."""
        K, snr, relay_db = self.num_users, self.snr_db, self.relay_power_db
        variances = self.bs_variances
        if self.sweep_kind == "snr_db":
            snr = value
        elif self.sweep_kind == "num_users":
            K = int(value)
            # 1, 1 - 1/K, ..., 1/K
            variances = tuple(1.0 - k / K for k in range(K))
        else:
            relay_db = value
        if variances is not None and len(variances) != K:
            raise ScenarioError(f"bs_variances has {len(variances)} entries for K={K}")
        Pt = db_to_linear(snr)
        relay = None if relay_db is None else (db_to_linear(relay_db),) * K
        uv = tuple(tuple(self.user_variance for _ in range(K)) for _ in range(K))
        return SystemConfig(K, self.num_tx_antennas, Pt, bs_variances=variances or (), relay_powers=relay,
                            user_variances=uv, **dict(self.options))


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must be a mapping")
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return scenario_from_dict(data, name)


def scenario_from_dict(data: dict, name: str = "scenario") -> Scenario:
    data = dict(data)
    try:
        sweep = data.pop("sweep")
        grid_step = float(data.get("grid_step", 0.1))
        strategies = tuple(Strategy(s, grid_step) for s in data.pop("strategies"))
        options = tuple((k, data.pop(k)) for k in _CONFIG_KEYS if k in data)
        bs_var = data.pop("bs_variances", None)
        sc = Scenario(
            num_users=int(data.pop("num_users", 3)),
            num_tx_antennas=int(data.pop("num_tx_antennas")),
            sweep_kind=str(sweep["kind"]),
            sweep_values=tuple(float(v) for v in sweep["values"]),
            strategies=strategies,
            protocols=tuple(data.pop("protocols", ["1-best"])),
            trials=int(data.pop("trials")),
            base_seed=int(data.pop("base_seed", 0)),
            snr_db=float(data.pop("snr_db", 20.0)),
            bs_variances=None if bs_var is None else tuple(float(v) for v in bs_var),
            user_variance=float(data.pop("user_variance", 1.0)),
            relay_power_db=data.pop("relay_power_db", None),
            selection=str(data.pop("selection", "centralized")),
            record_timing=bool(data.pop("record_timing", False)),
            options=options,
            name=name,
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"missing or malformed scenario key: {exc}") from exc
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    if data:
        raise ScenarioError(f"unknown scenario keys: {sorted(data)}")
    return sc


@dataclass
class Row:
    sweep: float
    strategy: str
    protocol: str
    trial: int
    rate: float
    theta: float
    iters: int
    ms: float
    channel_hash: str
    relays: Tuple[int, ...] = ()
    inner_solves: int = 1
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class Aggregate:
    mean: float
    count: int
    failures: int


@dataclass
class OverheadRow:
    sweep: float
    protocol: str
    trial: int
    report: relay_mod.OverheadReport


@dataclass
class ExperimentReport:
    scenario: Scenario
    rows: List[Row]
    overheads: List[OverheadRow] = field(default_factory=list)

    @property
    def ok_rows(self) -> List[Row]:
        return [r for r in self.rows if not r.failed]

    @property
    def failures(self) -> int:
        return sum(r.failed for r in self.rows)

    def aggregates(self) -> Dict[Tuple[float, str, str], Aggregate]:
        groups: Dict[Tuple[float, str, str], List[Row]] = {}
        for r in self.rows:
            groups.setdefault((r.sweep, r.strategy, r.protocol), []).append(r)
        out = {}
        for key, rows in groups.items():
            good = [r.rate for r in rows if not r.failed]
            mean = float(sum(good) / len(good)) if good else float("nan")
            out[key] = Aggregate(mean, len(good), len(rows) - len(good))
        return out

    def mean_rate(self, strategy: str, protocol: str, sweep: Optional[float] = None) -> float:
        """Mean over sweep points (or one point) of the per-point mean rates."""
        agg = self.aggregates()
        vals = [a.mean for (s, st, pr), a in agg.items()
                if st == strategy and pr == protocol and (sweep is None or s == sweep)]
        return float(np.mean(vals)) if vals else float("nan")

    def relative_gain(self, strategy_a: str, strategy_b: str, protocol: str = "1-best") -> float:
        """Percent gain (a - b) / b of the sweep-averaged mean rates."""
        return relative_gain(self.mean_rate(strategy_a, protocol), self.mean_rate(strategy_b, protocol))


def relative_gain(a: float, b: float) -> float:
    return 100.0 * (a - b) / b


# -- running ------------------------------------------------------------------

def _grouping_for(protocol: str, scenario: Scenario, channels, config, trial_seed: int):
    K = channels.num_users
    if protocol == "1-random":
        return relay_mod.select_random(K, trial_seed), "none"
    count = relay_mod.protocol_relay_count(protocol, K)
    if scenario.selection == "decentralized":
        return relay_mod.select_decentralized(channels, count, config.timer_constant), "decentralized"
    return relay_mod.select_centralized(channels, count), "centralized"


def _run_trial(scenario: Scenario, sweep_value: float, trial: int) -> Tuple[List[Row], List[OverheadRow]]:
    config = scenario.config_at(sweep_value)
    seed = scenario.base_seed + trial
    channels = generate_channels(config, seed)
    digest = channels.digest()
    rows: List[Row] = []
    overheads: Dict[str, OverheadRow] = {}
    shared: Dict[str, Tuple[object, float]] = {}

    for strategy in scenario.strategies:
        for protocol in scenario.protocols:
            start = time.perf_counter()
            relays: Tuple[int, ...] = ()
            try:
                if not strategy.cooperative:
                    if strategy.name not in shared:
                        t0 = time.perf_counter()
                        sol = solve(strategy, channels, None, config)
                        shared[strategy.name] = (sol, time.perf_counter() - t0)
                    sol, elapsed = shared[strategy.name]
                elif protocol == "optimal":
                    sel = relay_mod.select_optimal(
                        channels, config, lambda c, g, cf: solve(strategy, c, g, cf))
                    sol, relays = sel.solution, sel.grouping.group1
                    if protocol not in overheads:
                        # BS enumerates centrally and announces with one flag packet
                        overheads[protocol] = OverheadRow(sweep_value, protocol, trial,
                                                          relay_mod.overhead_for(sel.grouping, "centralized"))
                    elapsed = time.perf_counter() - start
                else:
                    grouping, scheme = _grouping_for(protocol, scenario, channels, config, seed)
                    relays = grouping.group1
                    if protocol not in overheads:
                        overheads[protocol] = OverheadRow(sweep_value, protocol, trial,
                                                          relay_mod.overhead_for(grouping, scheme))
                    sol = solve(strategy, channels, grouping, config)
                    elapsed = time.perf_counter() - start
            except (SCAFailure, InfeasibleSplitError, relay_mod.SelectionStallError) as exc:
                log.warning("sweep=%g trial=%d %s/%s failed: %s", sweep_value, trial, strategy.name, protocol, exc)
                rows.append(Row(sweep_value, strategy.name, protocol, trial, float("nan"), float("nan"), 0,
                                0.0, digest, relays, 0, str(exc)))
                continue
            rows.append(Row(sweep_value, strategy.name, protocol, trial, float(sol.maxmin_rate), float(sol.theta),
                            int(sol.iterations), 1000.0 * elapsed, digest, tuple(relays), sol.inner_solves))
    return rows, list(overheads.values())


def run_scenario(scenario: Scenario, workers: int = 1) -> ExperimentReport:
    """Run every (sweep point, trial); rows come back in scenario order."""
    jobs = [(v, i) for v in scenario.sweep_values for i in range(scenario.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, [scenario] * len(jobs), *zip(*jobs)))
    else:
        results = [_run_trial(scenario, v, i) for v, i in jobs]
    rows = [r for res, _ in results for r in res]
    overheads = [o for _, res in results for o in res]

    s_order = {s.name: i for i, s in enumerate(scenario.strategies)}
    p_order = {p: i for i, p in enumerate(scenario.protocols)}
    v_order = {v: i for i, v in enumerate(scenario.sweep_values)}
    rows.sort(key=lambda r: (v_order[r.sweep], s_order[r.strategy], p_order[r.protocol], r.trial))
    return ExperimentReport(scenario, rows, overheads)


# -- output -------------------------------------------------------------------

def _fmt_sweep(v: float) -> str:
    return f"{v:g}"


def csv_text(report: ExperimentReport) -> str:
    if not report.ok_rows:
        raise ValueError("report has no successful rows")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.ok_rows:
        ms = f"{r.ms:.1f}" if report.scenario.record_timing else ""
        w.writerow([_fmt_sweep(r.sweep), r.strategy, r.protocol, r.trial, f"{r.rate:.6f}", f"{r.theta:.6f}",
                    r.iters, ms])
    return buf.getvalue()


def emit_csv(report: ExperimentReport, path) -> str:
    """Write per-row results. The ms column is blank unless timing is recorded."""
    text = csv_text(report)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return str(path)


def emit_summary(report: ExperimentReport, path) -> str:
    agg = report.aggregates()
    if not agg:
        raise ValueError("report has no aggregates")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep", "strategy", "protocol", "mean_rate", "trials", "failures"])
        for (s, st, pr), a in agg.items():
            w.writerow([_fmt_sweep(s), st, pr, f"{a.mean:.6f}", a.count, a.failures])
    return str(path)


def emit_overhead(report: ExperimentReport, path) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep", "protocol", "trial", "scheme", "signaling_symbols", "time_units"])
        for o in report.overheads:
            w.writerow([_fmt_sweep(o.sweep), o.protocol, o.trial, o.report.scheme, o.report.signaling_symbols,
                        f"{o.report.time_units:.6g}"])
    return str(path)


def emit_plot(report: ExperimentReport, path) -> str:
    """Mean rate vs. sweep value, one line per (strategy, protocol), as SVG."""
    agg = report.aggregates()
    if not agg:
        raise ValueError("report has no aggregates")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xlabel = {"snr_db": "SNR (dB)", "num_users": "number of users K",
              "relay_power_db": "relay power (dB)"}[report.scenario.sweep_kind]
    fig, ax = plt.subplots(figsize=(6, 4))
    for st in report.scenario.strategies:
        for pr in report.scenario.protocols:
            xs = [v for v in report.scenario.sweep_values if (v, st.name, pr) in agg]
            ys = [agg[(v, st.name, pr)].mean for v in xs]
            label = st.name if not st.cooperative else f"{st.name} ({pr})"
            if not st.cooperative and pr != report.scenario.protocols[0]:
                continue
            ax.plot(xs, ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("max-min rate (bit/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return str(path)


def output_dir(default: str = "results") -> str:
    return os.environ.get(OUTPUT_ENV, default)
