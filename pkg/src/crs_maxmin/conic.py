"""Small conic modeling layer for the per-iteration convex subproblem.

Problems are built from named variable blocks and a handful of convex
constraint classes, lowered to the standard form

    minimize  q^T x   subject to  A x + s = b,  s in K

and solved with Clarabel, an interior-point solver with native second-order
and exponential cones. Complex blocks are stored as paired real blocks.

Constraint classes:

* ``linear``    expr <= 0 (elementwise) or expr == 0
* ``soc``       ||x|| <= t
* ``quad``      ||x||^2 <= r        (rotated cone, r affine scalar)
* ``exp2``      2^a <= r            (exponential cone)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import clarabel
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))
MAX_ITER = 200
VIOLATION_TOL = 1e-6


class Affine:
    """Vector of affine functions ``coef @ x + const`` of the real variable vector."""

    __slots__ = ("coef", "const")

    def __init__(self, coef, const=None):
        coef = np.atleast_2d(np.asarray(coef, dtype=float))
        self.coef = coef
        self.const = np.zeros(coef.shape[0]) if const is None else np.asarray(const, dtype=float).reshape(-1)

    @classmethod
    def constant(cls, value) -> "Affine":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.zeros((value.size, 0)), value)

    @property
    def size(self) -> int:
        return self.coef.shape[0]

    @property
    def width(self) -> int:
        return self.coef.shape[1]

    def widen(self, n: int) -> np.ndarray:
        if self.width == n:
            return self.coef
        out = np.zeros((self.size, n))
        out[:, : self.width] = self.coef
        return out

    def _lift(self, other) -> "Affine":
        if isinstance(other, Affine):
            return other
        return Affine.constant(np.broadcast_to(np.asarray(other, dtype=float), (self.size,)))

    def __add__(self, other):
        other = self._lift(other)
        n = max(self.width, other.width)
        if other.size == 1 and self.size > 1:
            other = Affine(np.repeat(other.widen(n), self.size, 0), np.repeat(other.const, self.size))
        elif self.size == 1 and other.size > 1:
            return other + self
        return Affine(self.widen(n) + other.widen(n), self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.coef, -self.const)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        scalar = np.asarray(scalar, dtype=float)
        if scalar.ndim == 0:
            return Affine(self.coef * scalar, self.const * scalar)
        return Affine(self.coef * scalar[:, None], self.const * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = [int(idx)]
        return Affine(self.coef[idx], self.const[idx])

    def sum(self) -> "Affine":
        return Affine(self.coef.sum(axis=0, keepdims=True), [self.const.sum()])

    def dot(self, weights) -> "Affine":
        w = np.asarray(weights, dtype=float)
        return Affine((w[:, None] * self.coef).sum(axis=0, keepdims=True), [w @ self.const])

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.widen(x.size) @ x + self.const

    @staticmethod
    def stack(items) -> "Affine":
        items = list(items)
        n = max(a.width for a in items)
        return Affine(np.vstack([a.widen(n) for a in items]), np.concatenate([a.const for a in items]))


@dataclass
class ComplexVar:
    """Complex vector variable stored as (re, im) real blocks."""

    re: Affine
    im: Affine

    @property
    def size(self) -> int:
        return self.re.size

    def inner(self, h) -> Tuple[Affine, Affine]:
        """Real and imaginary parts of h^H v."""
        h = np.asarray(h, dtype=complex)
        hr, hi = h.real, h.imag
        real = self.re.dot(hr) + self.im.dot(hi)
        imag = self.im.dot(hr) - self.re.dot(hi)
        return real, imag


@dataclass
class _Constraint:
    kind: str
    parts: tuple
    label: str


@dataclass
class _Block:
    name: str
    start: int
    size: int
    is_complex: bool


@dataclass
class ConicSolution:
    status: str
    values: Dict[str, np.ndarray]
    objective_value: float
    max_constraint_violation: float
    iterations: int = 0
    x: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near-optimal")


_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "near-optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


class ConicProblem:
    """Maximize a linear objective over a conjunction of convex cone constraints."""

    def __init__(self):
        self._blocks: Dict[str, _Block] = {}
        self._n = 0
        self._constraints: List[_Constraint] = []
        self._objective: Optional[Affine] = None

    # -- variables -------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return self._n

    def _alloc(self, name, size, is_complex) -> np.ndarray:
        if name in self._blocks:
            raise ValueError(f"variable {name!r} already declared")
        width = 2 * size if is_complex else size
        self._blocks[name] = _Block(name, self._n, size, is_complex)
        idx = np.arange(self._n, self._n + width)
        self._n += width
        return idx

    def _selector(self, idx) -> Affine:
        coef = np.zeros((len(idx), self._n))
        coef[np.arange(len(idx)), idx] = 1.0
        return Affine(coef)

    def variable(self, name: str, size: int = 1) -> Affine:
        return self._selector(self._alloc(name, size, False))

    def complex_variable(self, name: str, size: int) -> ComplexVar:
        idx = self._alloc(name, size, True)
        return ComplexVar(self._selector(idx[:size]), self._selector(idx[size:]))

    # -- constraints -----------------------------------------------------
    def _check(self, *exprs):
        for e in exprs:
            if e.width > self._n:
                raise ValueError("expression references undeclared variables")

    def add_le(self, expr: Affine, label: str = ""):
        """expr <= 0 elementwise."""
        self._check(expr)
        self._constraints.append(_Constraint("le", (expr,), label))

    def add_eq(self, expr: Affine, label: str = ""):
        self._check(expr)
        self._constraints.append(_Constraint("eq", (expr,), label))

    def add_soc(self, t: Affine, x: Affine, label: str = ""):
        """||x|| <= t."""
        if t.size != 1:
            raise ValueError("cone bound must be scalar")
        self._check(t, x)
        self._constraints.append(_Constraint("soc", (t, x), label))

    def add_quad(self, x: Affine, r: Affine, label: str = ""):
        """||x||^2 <= r."""
        if r.size != 1:
            raise ValueError("quadratic bound must be scalar")
        self._check(x, r)
        self._constraints.append(_Constraint("quad", (x, r), label))

    def add_exp2(self, a: Affine, r: Affine, label: str = ""):
        """2^a <= r, elementwise over matching sizes."""
        if a.size != r.size:
            raise ValueError("exponent and bound sizes differ")
        self._check(a, r)
        self._constraints.append(_Constraint("exp2", (a, r), label))

    def maximize(self, expr: Affine):
        if expr.size != 1:
            raise ValueError("objective must be scalar")
        self._check(expr)
        self._objective = expr

    def family_sizes(self) -> Dict[str, int]:
        """Number of scalar constraints per label prefix (text before ``[``)."""
        out: Dict[str, int] = {}
        for c in self._constraints:
            key = c.label.split("[")[0]
            n = c.parts[0].size if c.kind in ("le", "eq", "exp2") else 1
            out[key] = out.get(key, 0) + n
        return out

    # -- lowering --------------------------------------------------------
    def _lower(self):
        n = self._n
        zero_rows, le_rows, soc_rows, exp_rows = [], [], [], []
        soc_dims = []
        for c in self._constraints:
            if c.kind == "eq":
                (e,) = c.parts
                zero_rows.append((e.widen(n), -e.const))
            elif c.kind == "le":
                (e,) = c.parts
                le_rows.append((e.widen(n), -e.const))
            elif c.kind == "soc":
                t, x = c.parts
                # s = b - A x must equal (t, x)
                A = -np.vstack([t.widen(n), x.widen(n)])
                b = np.concatenate([t.const, x.const])
                soc_rows.append((A, b))
                soc_dims.append(1 + x.size)
            elif c.kind == "quad":
                x, r = c.parts
                # ||x||^2 <= r  <=>  ||(2x, r - 1)|| <= r + 1
                top = r + 1.0
                rest = Affine.stack([x * 2.0, r - 1.0])
                soc_rows.append((-np.vstack([top.widen(n), rest.widen(n)]),
                                 np.concatenate([top.const, rest.const])))
                soc_dims.append(1 + rest.size)
            elif c.kind == "exp2":
                a, r = c.parts
                for i in range(a.size):
                    # (a ln2, 1, r) in {(u, v, w): v exp(u / v) <= w}
                    A = -np.vstack([a.widen(n)[i] * LN2, np.zeros(n), r.widen(n)[i]])
                    b = np.array([a.const[i] * LN2, 1.0, r.const[i]])
                    exp_rows.append((A, b))
        blocks, cones = [], []
        if zero_rows:
            blocks += zero_rows
            cones.append(clarabel.ZeroConeT(sum(a.shape[0] for a, _ in zero_rows)))
        if le_rows:
            blocks += le_rows
            cones.append(clarabel.NonnegativeConeT(sum(a.shape[0] for a, _ in le_rows)))
        for rows, dim in zip(soc_rows, soc_dims):
            blocks.append(rows)
            cones.append(clarabel.SecondOrderConeT(dim))
        for rows in exp_rows:
            blocks.append(rows)
            cones.append(clarabel.ExponentialConeT())
        A = np.vstack([a for a, _ in blocks])
        b = np.concatenate([b for _, b in blocks])
        return sp.csc_matrix(A), b, cones

    def solve(self, max_iter: int = MAX_ITER, tol: float = 1e-9) -> ConicSolution:
        if self._objective is None:
            raise ValueError("no objective set")
        n = self._n
        A, b, cones = self._lower()
        q = -self._objective.widen(n)[0]
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = max_iter
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), q, A, b, cones, settings)
        raw = solver.solve()
        status = _STATUS.get(str(raw.status), "numerical-failure")
        x = np.asarray(raw.x, dtype=float)
        if status in ("infeasible", "unbounded") or not np.all(np.isfinite(x)):
            return ConicSolution(status if status != "optimal" else "numerical-failure",
                                 {}, float("nan"), float("inf"), raw.iterations, None)
        violation = self.max_violation(x)
        if violation > VIOLATION_TOL and status in ("optimal", "near-optimal"):
            log.debug("solver reported %s but audit found violation %.3e", status, violation)
            status = "numerical-failure"
        obj = float(self._objective.value(x)[0])
        return ConicSolution(status, self.unpack(x), obj, violation, raw.iterations, x)

    def unpack(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        out = {}
        for blk in self._blocks.values():
            if blk.is_complex:
                re = x[blk.start: blk.start + blk.size]
                im = x[blk.start + blk.size: blk.start + 2 * blk.size]
                out[blk.name] = re + 1j * im
            else:
                out[blk.name] = x[blk.start: blk.start + blk.size].copy()
        return out

    def pack(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        """Inverse of :meth:`unpack`; every declared block must be given."""
        x = np.zeros(self._n)
        for blk in self._blocks.values():
            v = np.asarray(values[blk.name]).reshape(-1)
            if v.size != blk.size:
                raise ValueError(f"block {blk.name!r} expects {blk.size} entries, got {v.size}")
            if blk.is_complex:
                x[blk.start: blk.start + blk.size] = v.real
                x[blk.start + blk.size: blk.start + 2 * blk.size] = v.imag
            else:
                x[blk.start: blk.start + blk.size] = v.real
        return x

    # -- audit -----------------------------------------------------------
    def violations(self, x: np.ndarray) -> List[Tuple[str, float]]:
        """Per-constraint violation at x, recomputed from the model (not the solver).

        Linear and cone constraints report absolute violation; ``quad`` and
        ``exp2`` report violation relative to ``1 + |bound|``.
        """
        x = np.asarray(x, dtype=float)
        out = []
        for c in self._constraints:
            if c.kind == "le":
                v = float(np.max(c.parts[0].value(x), initial=-np.inf))
            elif c.kind == "eq":
                v = float(np.max(np.abs(c.parts[0].value(x))))
            elif c.kind == "soc":
                t, xx = c.parts
                v = float(np.linalg.norm(xx.value(x)) - t.value(x)[0])
            elif c.kind == "quad":
                xx, r = c.parts
                rv = r.value(x)[0]
                v = float((np.sum(xx.value(x) ** 2) - rv) / (1.0 + abs(rv)))
            else:
                a, r = c.parts
                av, rv = a.value(x), r.value(x)
                v = float(np.max((np.exp2(av) - rv) / (1.0 + np.abs(rv))))
            out.append((c.label, max(v, 0.0)))
        return out

    def max_violation(self, x: np.ndarray) -> float:
        return max((v for _, v in self.violations(x)), default=0.0)

    # -- debug -----------------------------------------------------------
    def dump(self) -> str:
        """Sparse text listing of variables, objective and constraints."""
        lines = [f"vars {self._n}"]
        for blk in self._blocks.values():
            kind = "complex" if blk.is_complex else "real"
            lines.append(f"var {blk.name} {kind} {blk.size} @{blk.start}")

        def fmt(e: Affine) -> List[str]:
            rows = []
            for i in range(e.size):
                nz = np.nonzero(e.coef[i])[0]
                terms = " ".join(f"{e.coef[i, j]:+.17g}*x{j}" for j in nz)
                rows.append(f"  {terms} {e.const[i]:+.17g}")
            return rows

        lines.append("maximize")
        lines += fmt(self._objective) if self._objective is not None else []
        for c in self._constraints:
            lines.append(f"{c.kind} {c.label}")
            for part in c.parts:
                lines += fmt(part)
                lines.append("  ;")
        return "\n".join(lines) + "\n"
