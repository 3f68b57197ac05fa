"""Invariant suites runnable outside pytest (``crs-maxmin prop-check``)."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .channel import SystemConfig, db_to_linear, generate_channels
from .rates import PrecoderSet
from .relay import select_centralized, select_decentralized
from .sca import CRS, dc_linearized_lhs, dc_original_lhs, phi_lower_bound, sca_solve


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def check_phi_bound(samples: int = 100_000, seed: int = 0) -> CheckResult:
    """Phi never exceeds theta*alpha and touches it at the expansion point."""
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = rng.uniform(0, 1, samples)
    theta[theta == 0] = 1.0
    alpha = rng.uniform(0, 40, samples)
    theta_n = rng.uniform(0, 1, samples)
    alpha_n = rng.uniform(0, 40, samples)
    gap = theta * alpha - phi_lower_bound(theta, alpha, theta_n, alpha_n)
    touch = np.abs(theta_n * alpha_n - phi_lower_bound(theta_n, alpha_n, theta_n, alpha_n))
    ok = gap.min() >= -1e-12 and touch.max() <= 1e-12
    return CheckResult("phi-bound", bool(ok), f"min gap {gap.min():.3e}, max touch error {touch.max():.3e}")


def _random_precoders(rng, Nt, K, scale):
    z = lambda *s: (rng.normal(size=s) + 1j * rng.normal(size=s)) * scale
    return PrecoderSet(z(Nt), z(Nt, K))


def _term_scale(ch, p, rho, k, stream) -> float:
    """1 + interference + |h^H p|^2 / rho: magnitude of the summed terms, for float tolerances."""
    h = ch.h(k)
    sig = p.common if stream == "common" else p.private[:, k]
    total = np.sum(np.abs(h.conj() @ p.private) ** 2)
    return 1.0 + total + abs(np.vdot(h, sig)) ** 2 / rho


def check_dc_restriction(samples: int = 100_000, seed: int = 1, num_users: int = 3, num_tx: int = 2) -> CheckResult:
    """Linearized DC constraint bounds the original from above; equal at the expansion point.

    Both comparisons are relative to the magnitude of the terms being summed.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    config = SystemConfig(num_users, num_tx, 1.0)
    worst_gap, worst_touch = np.inf, 0.0
    per_channel = 1000
    for start in range(0, samples, per_channel):
        ch = generate_channels(config, seed * 1_000_003 + start)
        for _ in range(min(per_channel, samples - start)):
            scale = 10 ** rng.uniform(-2, 1)
            p, pn = _random_precoders(rng, num_tx, num_users, scale), _random_precoders(rng, num_tx, num_users, scale)
            rho, rho_n = 10 ** rng.uniform(-3, 2, 2)
            k = int(rng.integers(num_users))
            stream = "common" if rng.random() < 0.5 else "private"
            lin = dc_linearized_lhs(ch, p, rho, pn, rho_n, k, stream)
            orig = dc_original_lhs(ch, p, rho, k, stream)
            worst_gap = min(worst_gap, (lin - orig) / _term_scale(ch, p, rho, k, stream))
            at = dc_linearized_lhs(ch, pn, rho_n, pn, rho_n, k, stream) - dc_original_lhs(ch, pn, rho_n, k, stream)
            worst_touch = max(worst_touch, abs(at) / _term_scale(ch, pn, rho_n, k, stream))
    ok = worst_gap >= -1e-12 and worst_touch <= 1e-10
    return CheckResult("dc-restriction", bool(ok),
                       f"min relative gap {worst_gap:.3e}, max relative touch error {worst_touch:.3e}")


def check_selection_equivalence(draws: int = 100, seed: int = 0) -> CheckResult:
    """Timer-based selection reproduces the centralized choice."""
    bad = 0
    for i in range(draws):
        K = 3 + i % 4
        cfg = SystemConfig(K, 2, 10.0)
        ch = generate_channels(cfg, seed + i)
        for count in range(1, K):
            if select_centralized(ch, count).group1 != select_decentralized(ch, count, 1.0).group1:
                bad += 1
    return CheckResult("selection-equivalence", bad == 0, f"{bad} mismatches over {draws} draws")


def check_monotonicity(instances: int = 6, seed: int = 500) -> CheckResult:
    """SCA objective never decreases by more than 1e-8 between iterations."""
    worst, unconverged = 0.0, 0
    for i in range(instances):
        Nt = (2, 4)[i % 2]
        snr = (5.0, 20.0)[(i // 2) % 2]
        cfg = SystemConfig(3, Nt, db_to_linear(snr), bs_variances=(1.0, 0.3, 0.1))
        ch = generate_channels(cfg, seed + i)
        sol = sca_solve(ch, select_centralized(ch, 1), cfg, CRS)
        drops = np.diff([0.0, *sol.history])
        worst = min(worst, float(drops.min()))
        unconverged += not sol.converged
    ok = worst >= -1e-8 and unconverged == 0
    return CheckResult("sca-monotone", ok, f"largest decrease {-worst:.2e}, {unconverged} unconverged of {instances}")


def check_channel_determinism(seed: int = 7) -> CheckResult:
    cfg = SystemConfig(4, 3, 10.0)
    same = generate_channels(cfg, seed).digest() == generate_channels(cfg, seed).digest()
    differ = generate_channels(cfg, seed).digest() != generate_channels(cfg, seed + 1).digest()
    return CheckResult("channel-determinism", same and differ, "same seed same draw, next seed differs")


SUITES: List[Callable[[], CheckResult]] = [
    check_phi_bound,
    check_dc_restriction,
    check_selection_equivalence,
    check_channel_determinism,
    check_monotonicity,
]


def run_all(quick: bool = False) -> List[CheckResult]:
    out = []
    for fn in SUITES:
        t0 = time.perf_counter()
        if quick and fn in (check_phi_bound, check_dc_restriction):
            res = fn(samples=5_000)
        elif quick and fn is check_monotonicity:
            res = fn(instances=2)
        else:
            res = fn()
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
