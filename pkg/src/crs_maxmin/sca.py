"""Stage 2: joint precoder, common-split and time-slot optimization by SCA.

Each iteration replaces the two nonconvex pieces of the max-min problem by
convex inner approximations around the previous iterate:

* the bilinear ``theta * alpha`` is bounded below by a concave quadratic
  (:func:`phi_lower_bound`), tight at the expansion point;
* the SINR constraints ``|h^H p|^2 / rho >= interference + 1`` are written as
  difference-of-convex and the convex ``|h^H p|^2 / rho`` term is linearized
  (:func:`dc_linearized_lhs`).

The resulting subproblem is a conic program solved by :mod:`.conic`. Since
the previous iterate is feasible for the next subproblem, the objective is
nondecreasing across iterations.

Internally precoders are normalized by sqrt(P_t) so the power budget is 1;
``|g_k^H q|`` with ``g_k = sqrt(P_t) h_k`` equals ``|h_k^H p|``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import rates
from .channel import ChannelRealization, SystemConfig
from .conic import Affine, ComplexVar, ConicProblem, ConicSolution
from .relay import RelayGrouping

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-8
MONOTONE_SLACK = 1e-8
AUDIT_TOL = 1e-6
PERTURBATION = 1e-4


class SCAFailure(RuntimeError):
    """The convex subproblem could not be solved even after one retry."""

    def __init__(self, message: str, iteration: int, status: str):
        super().__init__(f"iteration {iteration}: {message} (status {status})")
        self.iteration = iteration
        self.status = status


@dataclass(frozen=True)
class Mode:
    """Restriction of the CRS problem used by the baselines.

    ``fixed_theta`` freezes the time split; ``use_common=False`` removes the
    common stream (SDMA).
    """

    fixed_theta: Optional[float] = None
    use_common: bool = True

    @property
    def label(self) -> str:
        if not self.use_common:
            return "sdma"
        return "crs" if self.fixed_theta is None else f"theta={self.fixed_theta:g}"


CRS = Mode()


@dataclass
class SCAState:
    iterate: int
    precoders: rates.PrecoderSet
    theta: float
    alpha: np.ndarray
    alpha_c: np.ndarray
    rho: np.ndarray
    rho_c: np.ndarray
    objective: float = 0.0
    history: List[float] = field(default_factory=list)


@dataclass
class TraceRow:
    n: int
    t: float
    theta: float
    power: float
    max_violation: float


@dataclass
class Solution:
    precoders: rates.PrecoderSet
    common_split: np.ndarray
    theta: float
    maxmin_rate: float
    iterations: int
    converged: bool
    history: List[float]
    grouping: Optional[RelayGrouping] = None
    mode: Mode = CRS
    trace: List[TraceRow] = field(default_factory=list, repr=False)
    final_state: Optional[SCAState] = field(default=None, repr=False)
    audited_rate: float = float("nan")
    inner_solves: int = 1
    surrogate_rate: float = float("nan")


# -- approximations -----------------------------------------------------------

def phi_lower_bound(theta, alpha, theta_n, alpha_n):
    """Concave lower bound of theta*alpha, tight at (theta_n, alpha_n).

    Uses theta*alpha = ((theta+alpha)^2 - (theta-alpha)^2) / 4 and linearizes
    the convex square.
    """
    s_n = np.add(theta_n, alpha_n)
    return 0.5 * s_n * np.add(theta, alpha) - 0.25 * s_n ** 2 - 0.25 * np.subtract(theta, alpha) ** 2


def _interference(h, precoders: rates.PrecoderSet, k: int, stream: str) -> float:
    g = np.abs(h.conj() @ precoders.private) ** 2
    if stream == "private":
        return float(np.sum(g) - g[k])
    if stream == "common":
        return float(np.sum(g))
    raise ValueError(f"unknown stream {stream!r}")


def _signal_precoder(precoders: rates.PrecoderSet, k: int, stream: str) -> np.ndarray:
    return precoders.private[:, k] if stream == "private" else precoders.common


def dc_original_lhs(channels: ChannelRealization, precoders, rho: float, k: int, stream: str) -> float:
    """interference + 1 - |h_k^H p|^2 / rho  (<= 0 iff SINR >= rho)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    h = channels.h(k)
    sig = abs(np.vdot(h, _signal_precoder(precoders, k, stream))) ** 2
    return _interference(h, precoders, k, stream) + 1.0 - sig / rho


def dc_linearized_lhs(channels: ChannelRealization, precoders, rho: float,
                      precoders_n, rho_n: float, k: int, stream: str) -> float:
    """Convex restriction of :func:`dc_original_lhs` linearized at (precoders_n, rho_n)."""
    if rho_n <= 0:
        raise ValueError("expansion rho must be positive")
    h = channels.h(k)
    a_n = np.vdot(h, _signal_precoder(precoders_n, k, stream))
    a = np.vdot(h, _signal_precoder(precoders, k, stream))
    lin = 2.0 * np.real(np.conj(a_n) * a) / rho_n - abs(a_n) ** 2 * rho / rho_n ** 2
    return _interference(h, precoders, k, stream) + 1.0 - lin


def true_objective(channels: ChannelRealization, precoders, theta: float, split) -> float:
    """min_k theta*log2(1 + SINR_k) + c_k at a given point, SINRs computed from scratch."""
    F = np.abs(channels.bs_channels.conj().T @ precoders.private) ** 2  # [user, stream]
    sig = np.diag(F)
    sinr = sig / (F.sum(axis=1) - sig + 1.0)
    return float(np.min(theta * np.log2(1.0 + sinr) + np.asarray(split)))


# -- initialization -----------------------------------------------------------

def _unit(h: np.ndarray, rng: np.random.Generator, k: int) -> np.ndarray:
    norm = np.linalg.norm(h)
    if norm > 0:
        return h / norm
    log.warning("user %d has a zero channel; using a random unit precoder", k)
    v = rng.standard_normal(h.size) + 1j * rng.standard_normal(h.size)
    return v / np.linalg.norm(v)


def exact_slacks(channels: ChannelRealization, precoders: rates.PrecoderSet):
    """(alpha, alpha_c, rho, rho_c) equal to the true per-unit-time rates and SINRs."""
    K = channels.num_users
    rho = np.array([rates.private_sinr(channels, precoders, k) for k in range(K)])
    rho_c = np.array([rates.common_sinr(channels, precoders, k) for k in range(K)])
    rho = np.maximum(rho, RHO_FLOOR)
    rho_c = np.maximum(rho_c, RHO_FLOOR)
    return np.log2(1 + rho), np.log2(1 + rho_c), rho, rho_c


def initial_precoders(channels: ChannelRealization, config: SystemConfig, mode: Mode = CRS) -> rates.PrecoderSet:
    """MRT private precoders plus the dominant left singular vector for s_c.

    Each private precoder gets beta*P_t/2 and the common one (1-beta)*P_t.
    For K > 2 that exceeds P_t, so private powers are scaled down uniformly
    to fit the remaining beta*P_t. Without a common stream the whole budget
    is split evenly over the private precoders.
    """
    H = channels.bs_channels
    nt, K = H.shape
    Pt, beta = config.bs_power, config.init_power_split
    rng = np.random.Generator(np.random.PCG64(channels.seed or 0))
    dirs = np.column_stack([_unit(H[:, k], rng, k) for k in range(K)])
    if not mode.use_common:
        return rates.PrecoderSet(np.zeros(nt, dtype=complex), dirs * np.sqrt(Pt / K))
    p_private = beta * Pt / 2
    if K * p_private + (1 - beta) * Pt > Pt * (1 + 1e-12):
        p_private = beta * Pt / K
    if np.any(np.abs(H) > 0):
        U, _, _ = np.linalg.svd(H)
        u_c = U[:, 0]
    else:
        u_c = _unit(np.zeros(nt), rng, -1)
    return rates.PrecoderSet(np.sqrt((1 - beta) * Pt) * u_c, dirs * np.sqrt(p_private))


def initialize(channels: ChannelRealization, grouping: Optional[RelayGrouping], config: SystemConfig,
               mode: Mode = CRS) -> SCAState:
    P0 = initial_precoders(channels, config, mode)
    alpha, alpha_c, rho, rho_c = exact_slacks(channels, P0)
    if not mode.use_common:
        alpha_c, rho_c = np.zeros_like(alpha_c), np.zeros_like(rho_c)
    theta = config.init_theta if mode.fixed_theta is None else mode.fixed_theta
    return SCAState(0, P0, float(theta), alpha, alpha_c, rho, rho_c, 0.0, [])


# -- subproblem ---------------------------------------------------------------

@dataclass
class Subproblem:
    problem: ConicProblem
    num_users: int
    num_tx_antennas: int
    scale: float

    def extract(self, sol: ConicSolution):
        v = sol.values
        K, nt = self.num_users, self.num_tx_antennas
        q_p = v["q_p"].reshape(K, nt).T
        P = rates.PrecoderSet(v["q_c"] * self.scale, q_p * self.scale)
        return dict(precoders=P, theta=float(v["theta"][0]), t=float(v["t"][0]),
                    c=v["c"], alpha=v["alpha"], alpha_c=v["alpha_c"], rho=v["rho"], rho_c=v["rho_c"])


def _coop_gains(channels, grouping, relay_powers) -> dict:
    return {k: rates.coop_log_gain(channels, grouping.group1, relay_powers, k) for k in grouping.group2}


def assemble_subproblem(state: SCAState, channels: ChannelRealization, grouping: Optional[RelayGrouping],
                        config: SystemConfig, mode: Mode = CRS) -> Subproblem:
    """Build the convex restriction around ``state``.

    With ``grouping=None`` there is no cooperative phase and theta must be
    frozen (NRS/SDMA). When theta is frozen the products theta*alpha are
    linear and used exactly.
    """
    K, nt = channels.num_users, channels.num_tx_antennas
    if grouping is None and mode.fixed_theta is None:
        raise ValueError("a free time split needs a relay grouping")
    scale = np.sqrt(config.bs_power)
    G = channels.bs_channels * scale
    Pn = state.precoders
    qc_n, qp_n = Pn.common / scale, Pn.private / scale

    prob = ConicProblem()
    q_c = prob.complex_variable("q_c", nt)
    q_p = prob.complex_variable("q_p", nt * K)
    t = prob.variable("t")
    theta = prob.variable("theta")
    c = prob.variable("c", K)
    alpha = prob.variable("alpha", K)
    alpha_c = prob.variable("alpha_c", K)
    rho = prob.variable("rho", K)
    rho_c = prob.variable("rho_c", K)

    def priv(j):
        return q_p.re[list(range(j * nt, (j + 1) * nt))], q_p.im[list(range(j * nt, (j + 1) * nt))]

    p_blocks = [ComplexVar(*priv(j)) for j in range(K)]

    sum_c = c.sum()
    fixed = mode.fixed_theta
    th_n = state.theta

    def bilinear_ge(a_var: Affine, a_n: float, rhs: Affine, label: str):
        # theta * a >= rhs, approximated when theta is free
        if fixed is not None:
            prob.add_le(rhs - a_var * fixed, label)
        else:
            s_n = th_n + a_n
            r = (theta + a_var) * (0.5 * s_n) - 0.25 * s_n ** 2 - rhs
            prob.add_quad((theta - a_var) * 0.5, r, label)

    for k in range(K):
        bilinear_ge(alpha[k], state.alpha[k], t - c[k], f"rate[{k}]")

    if mode.use_common:
        if grouping is None:
            for k in range(K):
                bilinear_ge(alpha_c[k], state.alpha_c[k], sum_c, f"common[{k}]")
        else:
            f2 = _coop_gains(channels, grouping, config.relay_power_array)
            for k in grouping.group1:
                bilinear_ge(alpha_c[k], state.alpha_c[k], sum_c, f"common_relay[{k}]")
            for k in grouping.group2:
                coop = (1.0 - theta) * f2[k] if fixed is None else Affine.constant((1.0 - fixed) * f2[k])
                bilinear_ge(alpha_c[k], state.alpha_c[k], sum_c - coop, f"common_assisted[{k}]")

    prob.add_exp2(alpha, rho + 1.0, "exp_private")
    if mode.use_common:
        prob.add_exp2(alpha_c, rho_c + 1.0, "exp_common")

    # Linearized DC constraints, multiplied through by rho_n > 0 for conditioning:
    #   rho_n (I + 1) - 2 Re{a_n^* g^H q} + |a_n|^2 rho / rho_n <= 0
    for k in range(K):
        g = G[:, k]
        terms = [p_blocks[j].inner(g) for j in range(K)]
        r_n = max(state.rho[k], RHO_FLOOR)
        a_n = np.vdot(g, qp_n[:, k])
        sig_re, sig_im = terms[k]
        lin = (sig_re * a_n.real + sig_im * a_n.imag) * 2.0 - rho[k] * (abs(a_n) ** 2 / r_n) - r_n
        x = Affine.stack([part for j in range(K) if j != k for part in terms[j]]) * np.sqrt(r_n)
        prob.add_quad(x, lin, f"dc_private[{k}]")
        if mode.use_common:
            rc_n = max(state.rho_c[k], RHO_FLOOR)
            ac_n = np.vdot(g, qc_n)
            cre, cim = q_c.inner(g)
            lin_c = (cre * ac_n.real + cim * ac_n.imag) * 2.0 - rho_c[k] * (abs(ac_n) ** 2 / rc_n) - rc_n
            xc = Affine.stack([part for j in range(K) for part in terms[j]]) * np.sqrt(rc_n)
            prob.add_quad(xc, lin_c, f"dc_common[{k}]")

    prob.add_soc(Affine.constant(1.0), Affine.stack([q_c.re, q_c.im, q_p.re, q_p.im]), "power")
    prob.add_le(-c, "split_nonneg")
    prob.add_le(Affine.constant(RHO_FLOOR) - rho, "rho_floor")
    prob.add_le(-alpha, "alpha_nonneg")
    if fixed is None:
        prob.add_le(Affine.stack([Affine.constant(config.theta_min) - theta, theta - 1.0]), "theta_bounds")
    else:
        prob.add_eq(theta - fixed, "theta_fixed")
    if mode.use_common:
        prob.add_le(Affine.constant(RHO_FLOOR) - rho_c, "rho_c_floor")
        prob.add_le(-alpha_c, "alpha_c_nonneg")
    else:
        prob.add_eq(Affine.stack([q_c.re, q_c.im, c, alpha_c, rho_c]), "no_common")
    prob.maximize(t)
    return Subproblem(prob, K, nt, scale)


# -- main loop ----------------------------------------------------------------

def _perturbed_state(state: SCAState, channels, mode: Mode, rng: np.random.Generator) -> SCAState:
    P = state.precoders

    def jitter(v):
        scale = PERTURBATION * max(np.linalg.norm(v), 1e-12)
        return v + scale * (rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)) / np.sqrt(2 * v.size)

    common = jitter(P.common) if mode.use_common else P.common
    newP = rates.PrecoderSet(common, jitter(P.private))
    total = newP.total_power()
    budget = state.precoders.total_power()
    if total > budget > 0:
        newP = rates.PrecoderSet(newP.common * np.sqrt(budget / total), newP.private * np.sqrt(budget / total))
    alpha, alpha_c, rho, rho_c = exact_slacks(channels, newP)
    if not mode.use_common:
        alpha_c, rho_c = np.zeros_like(alpha_c), np.zeros_like(rho_c)
    return replace(state, precoders=newP, alpha=alpha, alpha_c=alpha_c, rho=rho, rho_c=rho_c)


def sca_solve(channels: ChannelRealization, grouping: Optional[RelayGrouping], config: SystemConfig,
              mode: Mode = CRS, trace_path=None) -> Solution:
    """Run SCA until |t_n - t_{n-1}| < tolerance or the iteration cap.

    Raises :class:`SCAFailure` if a subproblem fails twice in a row (the
    retry starts from a slightly perturbed previous iterate).
    """
    state = initialize(channels, grouping, config, mode)
    rng = np.random.Generator(np.random.PCG64((channels.seed or 0) + 7919))
    trace: List[TraceRow] = []
    converged = False
    last: Optional[dict] = None
    t_prev = 0.0
    for n in range(1, config.max_iterations + 1):
        sub = assemble_subproblem(state, channels, grouping, config, mode)
        sol = sub.problem.solve()
        if not sol.ok:
            log.info("subproblem %d returned %s; retrying from a perturbed point", n, sol.status)
            state = _perturbed_state(state, channels, mode, rng)
            sub = assemble_subproblem(state, channels, grouping, config, mode)
            sol = sub.problem.solve()
            if not sol.ok:
                raise SCAFailure("subproblem failed after retry", n, sol.status)
        last = sub.extract(sol)
        t_n = last["t"]
        state = SCAState(n, last["precoders"], last["theta"], last["alpha"], last["alpha_c"],
                         np.maximum(last["rho"], RHO_FLOOR), np.maximum(last["rho_c"], RHO_FLOOR),
                         t_n, state.history + [t_n])
        if not mode.use_common:
            state.rho_c = np.zeros(channels.num_users)
        trace.append(TraceRow(n, t_n, state.theta, state.precoders.total_power(), sol.max_constraint_violation))
        if abs(t_n - t_prev) < config.sca_tolerance:
            converged = True
            break
        t_prev = t_n

    split = np.maximum(last["c"], 0.0)
    if not mode.use_common:
        split = np.zeros_like(split)
        state.precoders = rates.PrecoderSet(np.zeros_like(state.precoders.common), state.precoders.private)
    theta = float(np.clip(state.theta, 0.0, 1.0))
    if mode.fixed_theta is not None:
        theta = float(mode.fixed_theta)
    # The surrogate t underestimates the rate actually achieved by the
    # returned point; report the latter.
    rate = true_objective(channels, state.precoders, theta, split)
    result = Solution(state.precoders, split, theta, rate, state.iterate, converged,
                      list(state.history), grouping, mode, trace, state, surrogate_rate=state.objective)
    breakdown = rates.evaluate_solution(channels, grouping, result, config.relay_power_array)
    result.audited_rate = breakdown.maxmin_rate
    if abs(result.audited_rate - result.maxmin_rate) > AUDIT_TOL:
        log.warning("audit gap %.2e between reported and re-evaluated rate",
                    result.audited_rate - result.maxmin_rate)
    if trace_path is not None:
        write_trace(trace, trace_path)
    return result


def write_trace(trace: List[TraceRow], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t", "theta", "power", "max_violation"])
        for r in trace:
            w.writerow([r.n, f"{r.t:.10g}", f"{r.theta:.10g}", f"{r.power:.10g}", f"{r.max_violation:.3e}"])


# -- diagnostics --------------------------------------------------------------

@dataclass
class GroupRateCheck:
    applicable: bool
    common_gap: float = float("nan")
    group_rates: tuple = ()
    worst_direct: tuple = ()
    equality_holds: bool = True
    grouping_rule_holds: bool = True

    @property
    def passed(self) -> bool:
        return (not self.applicable) or (self.equality_holds and self.grouping_rule_holds)


def group_rate_check(solution, channels: ChannelRealization, grouping: RelayGrouping,
                       relay_powers, tol: float = 5e-2, interior=(0.01, 0.99)) -> GroupRateCheck:
    """At an interior time split, group common rates should match and the
    worst relay should out-decode the worst assisted user in the direct phase."""
    theta = solution.theta
    if not interior[0] < theta < interior[1]:
        return GroupRateCheck(False)
    b = rates.rate_breakdown(channels, solution.precoders, theta, solution.common_split, grouping, relay_powers)
    rc1, rc2 = b.group_common
    w1 = float(np.min(b.common_direct[list(grouping.group1)]))
    w2 = float(np.min(b.common_direct[list(grouping.group2)]))
    gap = abs(rc1 - rc2)
    return GroupRateCheck(True, gap, (rc1, rc2), (w1, w2), gap <= tol, w1 > w2 - tol)
