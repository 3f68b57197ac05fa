"""Stage 1: choosing the relaying users.

Users are 0-indexed. Every selector returns a :class:`RelayGrouping` whose
``group1`` holds the relays and ``group2`` the users they assist.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .channel import ChannelRealization, SystemConfig

log = logging.getLogger(__name__)

ENUMERATION_MAX_USERS = 6


class SelectionStallError(RuntimeError):
    """Decentralized selection cannot proceed: no remaining user can fire."""


class SelectionEvent(NamedTuple):
    round: int
    user: int
    value: float  # fired timer (decentralized) or channel strength (centralized)


@dataclass(frozen=True)
class RelayGrouping:
    group1: Tuple[int, ...]
    group2: Tuple[int, ...]
    selection_log: Tuple[SelectionEvent, ...] = field(default=(), compare=False)

    def __post_init__(self):
        g1, g2 = tuple(self.group1), tuple(self.group2)
        object.__setattr__(self, "group1", g1)
        object.__setattr__(self, "group2", g2)
        if not g1 or not g2:
            raise ValueError("both groups must be nonempty")
        if set(g1) & set(g2):
            raise ValueError("groups overlap")
        if sorted(g1 + g2) != list(range(len(g1) + len(g2))):
            raise ValueError("groups must partition {0..K-1}")

    @classmethod
    def from_relays(cls, relays: Sequence[int], num_users: int, selection_log=()) -> "RelayGrouping":
        relays = tuple(relays)
        rest = tuple(k for k in range(num_users) if k not in relays)
        return cls(relays, rest, tuple(selection_log))

    @property
    def num_users(self) -> int:
        return len(self.group1) + len(self.group2)

    def log_lines(self) -> str:
        """Line-oriented dump: one ``round user value`` triple per line."""
        head = f"# relays={','.join(map(str, self.group1))} assisted={','.join(map(str, self.group2))}"
        body = [f"{e.round} {e.user} {e.value:.17g}" for e in self.selection_log]
        return "\n".join([head, *body]) + "\n"


def _check_count(count: int, K: int):
    if not 1 <= count < K:
        raise ValueError(f"relay count must lie in [1, {K - 1}], got {count}")


def select_centralized(channels: ChannelRealization, count: int) -> RelayGrouping:
    """BS picks the ``count`` strongest users; equal strengths go to the lower index."""
    K = channels.num_users
    _check_count(count, K)
    strengths = channels.strengths()
    order = sorted(range(K), key=lambda k: (-strengths[k], k))
    chosen = order[:count]
    events = [SelectionEvent(r, k, float(strengths[k])) for r, k in enumerate(chosen)]
    return RelayGrouping.from_relays(chosen, K, events)


def timers(strengths, candidates, timer_constant: float) -> dict:
    """T_k = lambda / ||h_k||^2 for the candidate users (inf for zero strength)."""
    out = {}
    for k in candidates:
        s = float(strengths[k])
        out[k] = timer_constant / s if s > 0 else math.inf
    return out


def select_decentralized(channels: ChannelRealization, count: int, timer_constant: float) -> RelayGrouping:
    """Timer-based selection simulated round by round.

    Each round, every user not yet selected arms ``lambda / ||h_k||^2``; the
    first to expire announces itself and joins the relays. Exact ties fire
    the lowest index and are logged as a warning (collisions are not modeled).
    """
    K = channels.num_users
    _check_count(count, K)
    if timer_constant <= 0:
        raise ValueError("timer_constant must be positive")
    strengths = channels.strengths()
    remaining = list(range(K))
    chosen, events = [], []
    for rnd in range(count):
        armed = timers(strengths, remaining, timer_constant)
        best = min(armed.values())
        if math.isinf(best):
            raise SelectionStallError(f"round {rnd}: no remaining user has nonzero channel strength")
        fired = [k for k in remaining if armed[k] == best]
        if len(fired) > 1:
            log.warning("round %d: timers of users %s expire together; taking %d", rnd, fired, fired[0])
        k = fired[0]
        chosen.append(k)
        events.append(SelectionEvent(rnd, k, best))
        remaining.remove(k)
    return RelayGrouping.from_relays(chosen, K, events)


def select_random(num_users: int, seed: int) -> RelayGrouping:
    """Uniformly random single relay, reproducible from ``seed`` (PCG64)."""
    if num_users < 2:
        raise ValueError("need at least two users")
    rng = np.random.Generator(np.random.PCG64(seed))
    k = int(rng.integers(num_users))
    return RelayGrouping.from_relays([k], num_users, [SelectionEvent(0, k, float("nan"))])


def candidate_groupings(num_users: int) -> List[RelayGrouping]:
    """Every nonempty proper subset as relay set, by size then lexicographically."""
    out = []
    for size in range(1, num_users):
        for relays in itertools.combinations(range(num_users), size):
            out.append(RelayGrouping.from_relays(relays, num_users))
    return out


class OptimalSelection(NamedTuple):
    grouping: RelayGrouping
    rate: float
    solution: object
    evaluated: int


def select_optimal(channels: ChannelRealization, config: SystemConfig, solver: Callable,
                   max_users: int = ENUMERATION_MAX_USERS) -> OptimalSelection:
    """Solve Stage 2 for every candidate relay set and keep the best.

    ``solver(channels, grouping, config)`` must return an object with a
    ``maxmin_rate`` attribute. Ties keep the earlier candidate (smaller relay
    set, then lexicographic).
    """
    K = channels.num_users
    if K > max_users:
        raise ValueError(f"enumeration over K={K} users exceeds the guard of {max_users}; "
                         "raise max_users explicitly to proceed")
    best = None
    cands = candidate_groupings(K)
    for grouping in cands:
        sol = solver(channels, grouping, config)
        if best is None or sol.maxmin_rate > best[1]:
            best = (grouping, sol.maxmin_rate, sol)
    return OptimalSelection(best[0], float(best[1]), best[2], len(cands))


def protocol_relay_count(protocol: str, num_users: int) -> int:
    """Relay count for the named heuristic protocol ('1-best', 'K/2-best')."""
    if protocol == "1-best":
        return 1
    if protocol == "K/2-best":
        return min(math.ceil(num_users / 2), num_users - 1)
    raise ValueError(f"protocol {protocol!r} has no fixed relay count")


# -- overhead accounting -----------------------------------------------------

@dataclass(frozen=True)
class PacketSizes:
    """Packet lengths in symbols and the symbol duration T_S."""

    rts: int = 10
    cts: int = 5
    flag_centralized: int = 6
    flag_decentralized: int = 2
    symbol_duration: float = 1.0

    def __post_init__(self):
        if min(self.rts, self.cts, self.flag_centralized, self.flag_decentralized) < 0:
            raise ValueError("packet sizes must be nonnegative")
        if self.symbol_duration < 0:
            raise ValueError("symbol duration must be nonnegative")


@dataclass(frozen=True)
class OverheadReport:
    scheme: str
    signaling_symbols: int
    time_units: float
    packet_sizes: PacketSizes


SCHEMES = ("centralized", "decentralized", "none")


def overhead(scheme: str, num_users: int, relay_count: int, packets: PacketSizes = PacketSizes(),
             fired_timers: Sequence[float] = ()) -> OverheadReport:
    """Signaling symbols and time spent on handshake and relay selection.

    Every scheme pays the RTS plus one CTS per user. Centralized adds one
    BS flag packet; decentralized adds one flag per relay plus the time each
    winning timer ran (``fired_timers``, one per relay).
    """
    Ts = packets.symbol_duration
    base_sig = packets.rts + packets.cts * num_users
    base_time = packets.rts * Ts + packets.cts * Ts * num_users
    if scheme == "centralized":
        sig = base_sig + packets.flag_centralized
        t = base_time + packets.flag_centralized * Ts
    elif scheme == "decentralized":
        if len(fired_timers) != relay_count:
            raise ValueError("need one fired timer value per relay")
        sig = base_sig + packets.flag_decentralized * relay_count
        t = base_time + packets.flag_decentralized * Ts * relay_count + float(sum(fired_timers))
    elif scheme == "none":
        sig, t = base_sig, base_time
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return OverheadReport(scheme, int(sig), float(t), packets)


def overhead_for(grouping: RelayGrouping, scheme: str, packets: PacketSizes = PacketSizes()) -> OverheadReport:
    """Overhead of a concrete selection, reading fired timers from its log."""
    fired = [e.value for e in grouping.selection_log] if scheme == "decentralized" else ()
    return overhead(scheme, grouping.num_users, len(grouping.group1), packets, fired)
