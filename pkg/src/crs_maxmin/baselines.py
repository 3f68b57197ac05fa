"""Comparison strategies expressed as restrictions of the CRS problem.

* NRS   non-cooperative rate-splitting: theta frozen at 1, no relays.
* ERS   equal time split: theta frozen at 0.5.
* SDMA  no common stream, theta = 1.
* CRS-grid  theta swept over {delta, 2 delta, ..., 1}, each point solved by
  the same SCA routine with theta frozen; the best point is kept. This
  stands in for an exhaustive-theta baseline with a different inner
  precoder optimizer; it optimizes the same objective.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelRealization, SystemConfig
from .relay import RelayGrouping
from .sca import Mode, Solution, sca_solve


class StrategyKind(str, enum.Enum):
    CRS_SCA = "CRS-SCA"
    CRS_GRID = "CRS-grid"
    ERS = "ERS"
    NRS = "NRS"
    SDMA = "SDMA"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    grid_step: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.kind is StrategyKind.CRS_GRID and not 0 < self.grid_step < 1:
            raise ValueError("grid_step must lie in (0, 1)")

    @property
    def cooperative(self) -> bool:
        """Whether the outcome depends on the relay grouping."""
        return self.kind in (StrategyKind.CRS_SCA, StrategyKind.CRS_GRID, StrategyKind.ERS)

    @property
    def name(self) -> str:
        return self.kind.value


def solve_crs(channels: ChannelRealization, grouping: RelayGrouping, config: SystemConfig) -> Solution:
    return sca_solve(channels, grouping, config)


def solve_nrs(channels: ChannelRealization, config: SystemConfig) -> Solution:
    return sca_solve(channels, None, config, Mode(fixed_theta=1.0))


def solve_ers(channels: ChannelRealization, grouping: RelayGrouping, config: SystemConfig) -> Solution:
    return sca_solve(channels, grouping, config, Mode(fixed_theta=0.5))


def solve_sdma(channels: ChannelRealization, config: SystemConfig) -> Solution:
    return sca_solve(channels, None, config, Mode(fixed_theta=1.0, use_common=False))


def theta_grid(step: float) -> np.ndarray:
    """Regularly spaced candidates in (0, 1], always ending at 1."""
    if not 0 < step < 1:
        raise ValueError("step must lie in (0, 1)")
    n = int(np.floor(1.0 / step + 1e-9))
    grid = np.round(step * np.arange(1, n + 1), 12)
    if grid[-1] < 1.0 - 1e-12:
        grid = np.append(grid, 1.0)
    return grid


def solve_crs_grid(channels: ChannelRealization, grouping: RelayGrouping, config: SystemConfig,
                   step: Optional[float] = None) -> Solution:
    step = config.grid_step if step is None else step
    best = None
    grid = theta_grid(step)
    for theta in grid:
        sol = sca_solve(channels, grouping, config, Mode(fixed_theta=float(theta)))
        if best is None or sol.maxmin_rate > best.maxmin_rate:
            best = sol
    best.inner_solves = len(grid)
    return best


def solve(strategy: Strategy, channels: ChannelRealization, grouping: Optional[RelayGrouping],
          config: SystemConfig) -> Solution:
    """Dispatch on strategy; non-cooperative strategies ignore ``grouping``."""
    kind = strategy.kind
    if kind is StrategyKind.NRS:
        return solve_nrs(channels, config)
    if kind is StrategyKind.SDMA:
        return solve_sdma(channels, config)
    if grouping is None:
        raise ValueError(f"{kind.value} needs a relay grouping")
    if kind is StrategyKind.CRS_SCA:
        return solve_crs(channels, grouping, config)
    if kind is StrategyKind.ERS:
        return solve_ers(channels, grouping, config)
    return solve_crs_grid(channels, grouping, config, strategy.grid_step)
