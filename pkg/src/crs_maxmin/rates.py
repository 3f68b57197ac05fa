"""Achievable rates of cooperative rate-splitting.

All rates are in bits/s/Hz (log base 2). Users are 0-indexed. Noise variance
is 1 at every receiver.

Direct phase (fraction ``theta`` of the frame)::

    common  R_{c,k}^[1] = theta * log2(1 + |h_k^H p_c|^2 / (sum_j |h_k^H p_j|^2 + 1))
    private R_k^[1]     = theta * log2(1 + |h_k^H p_k|^2 / (sum_{j!=k} |h_k^H p_j|^2 + 1))

Cooperative phase (fraction ``1 - theta``), relays in group 1 forward s_c to
group 2 with independent codebooks, so phase rates add::

    R_{c,k}^[2] = (1 - theta) * log2(1 + sum_{j in K1} P_j |h_{k,j}|^2)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .channel import ChannelRealization

FEASIBILITY_SLACK = 1e-6


class InfeasibleSplitError(ValueError):
    """The common-rate split exceeds the achievable common rate."""

    def __init__(self, violation: float):
        super().__init__(f"sum of common split exceeds R_c by {violation:.3e}")
        self.violation = violation


@dataclass(frozen=True)
class PrecoderSet:
    """``common`` has shape (N_t,); ``private`` has shape (N_t, K), column k is p_k."""

    common: np.ndarray
    private: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "common", np.asarray(self.common, dtype=complex).reshape(-1))
        P = np.asarray(self.private, dtype=complex)
        if P.ndim == 1:
            P = P[None, :]
        object.__setattr__(self, "private", P)
        if P.shape[0] != self.common.shape[0]:
            raise ValueError("common and private precoders must share N_t")

    @property
    def num_users(self) -> int:
        return self.private.shape[1]

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.common) ** 2) + np.sum(np.abs(self.private) ** 2))

    def matrix(self) -> np.ndarray:
        """Integrated precoder [p_c, p_1, ..., p_K]."""
        return np.column_stack([self.common, self.private])


@dataclass(frozen=True)
class RateBreakdown:
    private_direct: np.ndarray
    common_direct: np.ndarray
    common_coop: np.ndarray
    group_common: tuple
    achievable_common: float
    common_split: np.ndarray
    totals: np.ndarray

    @property
    def maxmin_rate(self) -> float:
        return float(np.min(self.totals))


def _check_user(channels: ChannelRealization, k: int):
    if not 0 <= k < channels.num_users:
        raise IndexError(f"user index {k} out of range for K={channels.num_users}")


def _gains(channels: ChannelRealization, precoders: PrecoderSet, k: int):
    h = channels.h(k)
    common = np.abs(np.vdot(h, precoders.common)) ** 2
    private = np.abs(h.conj() @ precoders.private) ** 2
    return common, private


def private_sinr(channels: ChannelRealization, precoders: PrecoderSet, k: int) -> float:
    _, priv = _gains(channels, precoders, k)
    return float(priv[k] / (np.sum(priv) - priv[k] + 1.0))


def common_sinr(channels: ChannelRealization, precoders: PrecoderSet, k: int) -> float:
    com, priv = _gains(channels, precoders, k)
    return float(com / (np.sum(priv) + 1.0))


def private_rate_direct(channels, precoders, k: int, theta: float) -> float:
    """Rate of the private stream at user k after SIC has removed s_c."""
    _check_user(channels, k)
    return float(theta * np.log2(1.0 + private_sinr(channels, precoders, k)))


def common_rate_direct(channels, precoders, k: int, theta: float) -> float:
    """Rate of decoding s_c at user k in the direct phase, all private streams as noise."""
    _check_user(channels, k)
    return float(theta * np.log2(1.0 + common_sinr(channels, precoders, k)))


def coop_log_gain(channels: ChannelRealization, relays: Iterable[int], relay_powers, k: int) -> float:
    """theta-free cooperative term log2(1 + sum_{j in K1} P_j |h_{k,j}|^2)."""
    powers = np.asarray(relay_powers, dtype=float)
    snr = sum(powers[j] * abs(channels.user_channels[k, j]) ** 2 for j in relays)
    return float(np.log2(1.0 + snr))


def common_rate_coop(channels, relays: Sequence[int], relay_powers, k: int, theta: float) -> float:
    _check_user(channels, k)
    if k in set(relays):
        raise ValueError(f"user {k} is a relay and receives no cooperative phase")
    return float((1.0 - theta) * coop_log_gain(channels, relays, relay_powers, k))


def achievable_common_rate(direct_common, combined_common, group1, group2):
    """Return (R_{c,1}, R_{c,2}, R_c).

    ``direct_common[k]`` is R_{c,k}^[1]; ``combined_common[k]`` is
    R_{c,k}^[1] + R_{c,k}^[2] (only read for group-2 users).
    """
    group1, group2 = list(group1), list(group2)
    if not group1 or not group2:
        raise ValueError("both user groups must be nonempty")
    direct_common = np.asarray(direct_common, dtype=float)
    combined_common = np.asarray(combined_common, dtype=float)
    rc1 = float(np.min(direct_common[group1]))
    rc2 = float(np.min(combined_common[group2]))
    return rc1, rc2, min(rc1, rc2)


def rate_breakdown(channels, precoders, theta, split, grouping=None, relay_powers=None) -> RateBreakdown:
    """All rate terms for a given operating point, without feasibility checks.

    ``grouping`` of None means no cooperative phase (NRS/SDMA); R_c is then
    the minimum direct common rate over all users.
    """
    K = channels.num_users
    priv = np.array([private_rate_direct(channels, precoders, k, theta) for k in range(K)])
    com = np.array([common_rate_direct(channels, precoders, k, theta) for k in range(K)])
    coop = np.zeros(K)
    if grouping is None:
        rc = float(np.min(com))
        groups = (rc, rc)
    else:
        if relay_powers is None:
            raise ValueError("relay_powers required for a cooperative grouping")
        for k in grouping.group2:
            coop[k] = common_rate_coop(channels, grouping.group1, relay_powers, k, theta)
        rc1, rc2, rc = achievable_common_rate(com, com + coop, grouping.group1, grouping.group2)
        groups = (rc1, rc2)
    split = np.asarray(split, dtype=float)
    return RateBreakdown(priv, com, coop, groups, rc, split, priv + split)


def evaluate_solution(channels, grouping, solution, relay_powers=None) -> RateBreakdown:
    """Independently re-evaluate a solution and check the common split.

    ``solution`` needs ``precoders``, ``common_split`` and ``theta``. Raises
    :class:`InfeasibleSplitError` when the split is negative or its sum
    exceeds R_c by more than the relative slack.
    """
    b = rate_breakdown(channels, solution.precoders, solution.theta, solution.common_split,
                       grouping, relay_powers)
    c = b.common_split
    slack = FEASIBILITY_SLACK * max(1.0, abs(b.achievable_common))
    over = float(np.sum(c) - b.achievable_common)
    neg = float(-np.min(c)) if c.size else 0.0
    violation = max(over, neg)
    if violation > slack:
        raise InfeasibleSplitError(violation)
    return b


def theta_crossover(f1_relay: float, f1_assisted: float, f2_assisted: float) -> float:
    """theta where the group common rates cross.

    Arguments are the theta-free log terms of the worst users: f^[1] of the
    worst relay, f^[1] and f^[2] of the worst assisted user. Below the result,
    group 1 limits R_c; above it, group 2 does.
    """
    denom = f1_relay - f1_assisted + f2_assisted
    if denom <= 0:
        raise ValueError("no interior crossover: group-1 rate never exceeds group-2 rate")
    return float(f2_assisted / denom)


def crossover_for(channels, precoders, grouping, relay_powers) -> float:
    """Exact crossover theta for a concrete operating point.

    R_c1(theta) is linear in theta and R_c2(theta) is a minimum of lines, so
    the crossing is the smallest per-user crossover among assisted users
    whose line is overtaken at all.
    """
    K = channels.num_users
    f1 = np.array([np.log2(1.0 + common_sinr(channels, precoders, k)) for k in range(K)])
    g1 = list(grouping.group1)
    f1_relay = float(np.min(f1[g1]))
    cands = []
    for k in grouping.group2:
        f2 = coop_log_gain(channels, g1, relay_powers, k)
        try:
            cands.append(theta_crossover(f1_relay, float(f1[k]), f2))
        except ValueError:
            continue
    if not cands:
        raise ValueError("no interior crossover: group-1 rate never exceeds group-2 rate")
    return float(min(cands))
