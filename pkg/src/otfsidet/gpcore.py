"""Posynomial algebra, AM-GM condensation and a geometric-program solver.

A posynomial is stored as a coefficient vector plus a sparse exponent matrix
(terms x variables) over a tuple of variable names. After the change of
variables ``y = log x`` every posynomial constraint becomes a log-sum-exp,
and a product of posynomials becomes a sum of log-sum-exps; both are convex,
so products are kept factored instead of being expanded.

``solve_gp`` hands the log-space problem to Clarabel as an exponential-cone
program by default. A primal log-barrier method with damped Newton centering
and a phase-I search is kept as ``method="barrier"``; it needs no external
solver and serves as a fallback and cross-check.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from numbers import Real
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)


class GPError(ValueError):
    pass


@dataclass(frozen=True)
class Monomial:
    coeff: float
    exponents: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.coeff > 0 and math.isfinite(self.coeff)):
            raise GPError(f"monomial coefficient must be positive and finite, got {self.coeff}")
        clean = {}
        for k, v in self.exponents.items():
            if not math.isfinite(v):
                raise GPError(f"non-finite exponent for {k}")
            if v != 0:
                clean[k] = float(v)
        object.__setattr__(self, "exponents", clean)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(sorted(self.exponents))

    def eval(self, point: Mapping[str, float]) -> float:
        out = self.coeff
        for k, a in self.exponents.items():
            out *= _positive(point, k) ** a
        return out

    __call__ = eval

    def __mul__(self, other):
        if isinstance(other, Real):
            return Monomial(self.coeff * float(other), self.exponents)
        if isinstance(other, Monomial):
            exps = dict(self.exponents)
            for k, a in other.exponents.items():
                exps[k] = exps.get(k, 0.0) + a
            return Monomial(self.coeff * other.coeff, exps)
        if isinstance(other, Posynomial):
            return other * self
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Real):
            return Monomial(self.coeff / float(other), self.exponents)
        if isinstance(other, Monomial):
            return self * other**-1
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, Real):
            return Monomial(float(other), {}) * self**-1
        return NotImplemented

    def __pow__(self, p: float):
        return Monomial(self.coeff**p, {k: a * p for k, a in self.exponents.items()})

    def __add__(self, other):
        return Posynomial.from_monomials([self]) + other

    __radd__ = __add__

    def as_posynomial(self) -> "Posynomial":
        return Posynomial.from_monomials([self])


def var(name: str) -> Monomial:
    return Monomial(1.0, {name: 1.0})


def _positive(point: Mapping[str, float], name: str) -> float:
    try:
        v = point[name]
    except KeyError:
        raise GPError(f"point is missing variable {name!r}") from None
    if not v > 0:
        raise GPError(f"variable {name!r} must be positive, got {v}")
    return float(v)


class Posynomial:
    """Sum of monomials. Terms are not merged unless :meth:`merged` is called."""

    __slots__ = ("variables", "coeffs", "exps", "_index")

    def __init__(self, coeffs, exps, variables: Sequence[str]):
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        exps = sp.csr_matrix(exps, dtype=float)
        variables = tuple(variables)
        if coeffs.size == 0:
            raise GPError("posynomial needs at least one term")
        if exps.shape != (coeffs.size, len(variables)):
            raise GPError(f"exponent matrix {exps.shape} does not match {coeffs.size} terms x {len(variables)} vars")
        if not np.all((coeffs > 0) & np.isfinite(coeffs)):
            raise GPError("posynomial coefficients must be positive and finite")
        if len(set(variables)) != len(variables):
            raise GPError("duplicate variable names")
        self.coeffs = coeffs
        self.exps = exps
        self.variables = variables
        self._index = None

    @classmethod
    def from_monomials(cls, monos: Iterable[Monomial]) -> "Posynomial":
        monos = list(monos)
        names = sorted({k for m in monos for k in m.exponents})
        idx = {k: i for i, k in enumerate(names)}
        rows, cols, vals = [], [], []
        for r, m in enumerate(monos):
            for k, a in m.exponents.items():
                rows.append(r)
                cols.append(idx[k])
                vals.append(a)
        exps = sp.csr_matrix((vals, (rows, cols)), shape=(len(monos), len(names)))
        return cls([m.coeff for m in monos], exps, names)

    @classmethod
    def constant(cls, c: float) -> "Posynomial":
        return cls([c], sp.csr_matrix((1, 0)), ())

    @property
    def index(self) -> dict[str, int]:
        if self._index is None:
            self._index = {k: i for i, k in enumerate(self.variables)}
        return self._index

    def __len__(self):
        return self.coeffs.size

    def __iter__(self):
        return iter(self.terms)

    @property
    def terms(self) -> list[Monomial]:
        out = []
        for r in range(len(self)):
            lo, hi = self.exps.indptr[r], self.exps.indptr[r + 1]
            exps = {self.variables[c]: a for c, a in zip(self.exps.indices[lo:hi], self.exps.data[lo:hi])}
            out.append(Monomial(float(self.coeffs[r]), exps))
        return out

    def __repr__(self):
        return f"Posynomial({len(self)} terms, {len(self.variables)} vars)"

    def aligned(self, variables: Sequence[str]) -> sp.csr_matrix:
        """Exponent matrix re-expressed over ``variables`` (a superset)."""
        target = {k: i for i, k in enumerate(variables)}
        try:
            cols = np.array([target[k] for k in self.variables], dtype=int)
        except KeyError as e:
            raise GPError(f"variable {e.args[0]!r} not declared") from None
        P = sp.csr_matrix(
            (np.ones(len(cols)), (np.arange(len(cols)), cols)), shape=(len(self.variables), len(variables))
        )
        return sp.csr_matrix(self.exps @ P)

    def _union(self, other: "Posynomial"):
        names = tuple(sorted(set(self.variables) | set(other.variables)))
        return names, self.aligned(names), other.aligned(names)

    def __add__(self, other):
        if isinstance(other, Real):
            other = Posynomial.constant(float(other))
        elif isinstance(other, Monomial):
            other = other.as_posynomial()
        if not isinstance(other, Posynomial):
            return NotImplemented
        names, a, b = self._union(other)
        return Posynomial(np.concatenate([self.coeffs, other.coeffs]), sp.vstack([a, b]), names)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Real):
            return Posynomial(self.coeffs * float(other), self.exps, self.variables)
        if isinstance(other, Monomial):
            other = other.as_posynomial()
        if not isinstance(other, Posynomial):
            return NotImplemented
        names, a, b = self._union(other)
        ka, kb = len(self), len(other)
        ia = np.repeat(np.arange(ka), kb)
        ib = np.tile(np.arange(kb), ka)
        exps = a[ia] + b[ib]
        return Posynomial(self.coeffs[ia] * other.coeffs[ib], exps, names)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Real):
            return self * (1.0 / float(other))
        if isinstance(other, Monomial):
            return self * other**-1
        return NotImplemented

    def merged(self) -> "Posynomial":
        """Combine terms with identical exponent vectors."""
        dense_keys = self.exps.tocsr()
        dense_keys.sort_indices()
        keys = {}
        order = []
        coeffs = []
        for r in range(len(self)):
            lo, hi = dense_keys.indptr[r], dense_keys.indptr[r + 1]
            key = (tuple(dense_keys.indices[lo:hi]), tuple(dense_keys.data[lo:hi]))
            j = keys.get(key)
            if j is None:
                keys[key] = len(order)
                order.append(r)
                coeffs.append(self.coeffs[r])
            else:
                coeffs[j] += self.coeffs[r]
        return Posynomial(coeffs, self.exps[order], self.variables)

    def rename(self, mapping: Mapping[str, str]) -> "Posynomial":
        """Substitute variables by name; several names may map to one (tying)."""
        new_names = [mapping.get(k, k) for k in self.variables]
        names = tuple(sorted(set(new_names)))
        idx = {k: i for i, k in enumerate(names)}
        cols = [idx[k] for k in new_names]
        T = sp.csr_matrix((np.ones(len(cols)), (np.arange(len(cols)), cols)), shape=(len(new_names), len(names)))
        return Posynomial(self.coeffs, self.exps @ T, names)

    def log_terms(self, point: Mapping[str, float]) -> np.ndarray:
        logx = np.array([math.log(_positive(point, k)) for k in self.variables])
        return np.log(self.coeffs) + self.exps @ logx

    def term_values(self, point: Mapping[str, float]) -> np.ndarray:
        return np.exp(self.log_terms(point))

    def eval(self, point: Mapping[str, float]) -> float:
        return float(np.sum(self.term_values(point)))

    __call__ = eval

    def to_json(self) -> dict:
        return {
            "variables": list(self.variables),
            "terms": [{"coeff": m.coeff, "exponents": m.exponents} for m in self.terms],
        }


@dataclass(frozen=True)
class PosynomialProduct:
    """Constraint form ``prod_j factors[j] <= 1``, kept unexpanded."""

    factors: tuple[Posynomial, ...]

    def __post_init__(self):
        if not self.factors:
            raise GPError("empty product")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(sorted({k for f in self.factors for k in f.variables}))

    def eval(self, point: Mapping[str, float]) -> float:
        return float(np.prod([f.eval(point) for f in self.factors]))

    __call__ = eval

    def to_json(self) -> dict:
        return {"product": [f.to_json() for f in self.factors]}


Constraint = Union[Posynomial, Monomial, PosynomialProduct]


def _as_posy(p) -> Posynomial:
    if isinstance(p, Monomial):
        return p.as_posynomial()
    if isinstance(p, Posynomial):
        return p
    raise TypeError(f"expected Posynomial or Monomial, got {type(p).__name__}")


def eval_posynomial(p, point: Mapping[str, float]) -> float:
    return p.eval(point)


def amgm_weights(p: Posynomial, point: Mapping[str, float]) -> np.ndarray:
    """Each term's share of ``p`` at ``point``; the weights sum to one."""
    lt = p.log_terms(point)
    w = np.exp(lt - lt.max())
    return w / w.sum()


def amgm_condense(p, point: Mapping[str, float]) -> Monomial:
    """Best local monomial lower bound: prod_k (g_k / w_k) ** w_k.

    Weighted AM-GM gives ``m(x) <= p(x)`` for every positive ``x`` with
    equality at ``point``.
    """
    p = _as_posy(p)
    lt = p.log_terms(point)
    lw = lt - lt.max()
    w = np.exp(lw)
    s = w.sum()
    w = w / s
    if np.any(w <= 0):
        raise GPError("a term vanishes at the expansion point; condensation is degenerate")
    log_w = lw - math.log(s)
    log_coeff = float(np.sum(w * (np.log(p.coeffs) - log_w)))
    exps = np.asarray(p.exps.T @ w).ravel()
    return Monomial(math.exp(log_coeff), dict(zip(p.variables, exps)))


@dataclass
class GPProblem:
    """Minimise ``objective`` subject to every constraint ``<= 1`` and box bounds."""

    objective: Posynomial
    constraints_le: list = field(default_factory=list)
    bounds: dict = field(default_factory=dict)
    variables: Optional[tuple[str, ...]] = None
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.objective = _as_posy(self.objective)
        cons = []
        for c in self.constraints_le:
            cons.append(c if isinstance(c, PosynomialProduct) else _as_posy(c))
        self.constraints_le = cons
        used = set(self.objective.variables)
        for c in cons:
            used.update(c.variables)
        used.update(self.bounds)
        if self.variables is None:
            self.variables = tuple(sorted(used))
        else:
            self.variables = tuple(self.variables)
            missing = used - set(self.variables)
            if missing:
                raise GPError(f"undeclared variables: {sorted(missing)[:5]}")
        for k, (lo, hi) in self.bounds.items():
            if lo is not None and not lo > 0:
                raise GPError(f"lower bound for {k} must be positive")
            if hi is not None and lo is not None and hi < lo:
                raise GPError(f"empty box for {k}")

    def to_json(self) -> dict:
        return {
            "variables": list(self.variables),
            "objective": self.objective.to_json(),
            "constraints": [c.to_json() for c in self.constraints_le],
            "labels": list(self.labels),
            "bounds": {k: [lo, hi] for k, (lo, hi) in self.bounds.items()},
        }


@dataclass
class GPSolution:
    assignment: dict
    objective_value: float
    kkt_residual: float
    status: str
    newton_steps: int = 0
    stationarity: float = 0.0

    def __getitem__(self, name: str) -> float:
        return self.assignment[name]


class _LogSumExpSet:
    """Functions f_i(y) = sum_g LSE(A_g y + b_g) + c_i . y + d_i, evaluated together."""

    def __init__(self, n_vars: int):
        self.n = n_vars
        self.rows_A = []
        self.rows_b = []
        self.row_group = []
        self.group_con = []
        self.lin = []
        self.lin_const = []
        self.n_con = 0

    def add(self, groups: Sequence[tuple[np.ndarray, sp.csr_matrix]], linear=None, const=0.0):
        i = self.n_con
        lin = np.zeros(self.n)
        if linear is not None:
            lin += linear
        for logc, A in groups:
            if A.shape[0] == 1:
                lin += A.toarray().ravel()
                const += float(logc[0])
                continue
            g = len(self.group_con)
            self.group_con.append(i)
            self.rows_A.append(A)
            self.rows_b.append(logc)
            self.row_group.append(np.full(A.shape[0], g))
        self.lin.append(lin)
        self.lin_const.append(const)
        self.n_con += 1
        return i

    def finalize(self):
        n_groups = len(self.group_con)
        self.group_con = np.asarray(self.group_con, dtype=int)
        if n_groups:
            self.A = sp.csr_matrix(sp.vstack(self.rows_A))
            self.b = np.concatenate(self.rows_b)
            self.row_group = np.concatenate(self.row_group)
        else:
            self.A = sp.csr_matrix((0, self.n))
            self.b = np.zeros(0)
            self.row_group = np.zeros(0, dtype=int)
        self.starts = np.flatnonzero(np.r_[True, np.diff(self.row_group) != 0]) if n_groups else np.zeros(0, int)
        R = self.A.shape[0]
        self.row_con = self.group_con[self.row_group] if n_groups else np.zeros(0, int)
        self.G_rows = sp.csr_matrix((np.ones(R), (self.row_group, np.arange(R))), shape=(n_groups, R))
        self.C_rows = sp.csr_matrix((np.ones(R), (self.row_con, np.arange(R))), shape=(self.n_con, R))
        self.L = sp.csr_matrix(np.array(self.lin).reshape(self.n_con, self.n))
        self.d = np.asarray(self.lin_const, dtype=float)
        del self.rows_A, self.rows_b, self.lin, self.lin_const
        return self

    def values(self, y: np.ndarray):
        f = self.L @ y + self.d
        p = None
        if self.A.shape[0]:
            z = self.A @ y + self.b
            mx = np.maximum.reduceat(z, self.starts)
            e = np.exp(z - mx[self.row_group])
            s = np.add.reduceat(e, self.starts)
            lse = mx + np.log(s)
            f = f + np.bincount(self.group_con, lse, minlength=self.n_con)
            p = e / s[self.row_group]
        return f, p

    def jacobian(self, p) -> sp.csr_matrix:
        J = self.L
        if p is not None:
            J = J + (self.C_rows @ sp.diags(p)) @ self.A
        return sp.csr_matrix(J)

    def weighted_hessian(self, p, w: np.ndarray) -> np.ndarray:
        """sum_i w_i * Hessian(f_i)."""
        if p is None:
            return np.zeros((self.n, self.n))
        wr = w[self.row_con] * p
        H = (self.A.T @ sp.diags(wr) @ self.A).toarray()
        Q = (self.G_rows @ sp.diags(p)) @ self.A
        H -= (Q.T @ sp.diags(w[self.group_con]) @ Q).toarray()
        return H


def _groups_of(c, variables) -> list:
    factors = c.factors if isinstance(c, PosynomialProduct) else (c,)
    return [(np.log(f.coeffs), f.aligned(variables)) for f in factors]


BOUNDARY_FRACTION = 0.01


class _Barrier:
    def __init__(self, obj: _LogSumExpSet, cons: _LogSumExpSet):
        self.obj = obj
        self.cons = cons
        self.steps = 0

    def center(self, y, t, max_steps, tol=1e-10, stop_below=None):
        """Newton centering of t*f0 - sum log(-f_i). Returns (y, converged, decrement)."""
        obj, cons = self.obj, self.cons
        f0, p0 = obj.values(y)
        fc, pc = cons.values(y)
        phi = t * f0[0] - np.sum(np.log(-fc))
        lam2 = np.inf
        for _ in range(max_steps):
            if stop_below is not None and f0[0] < stop_below:
                return y, True, 0.0
            w = 1.0 / (-fc)
            J0 = obj.jacobian(p0)
            Jc = cons.jacobian(pc)
            grad = t * np.asarray(J0.toarray()).ravel() + Jc.T @ w
            H = t * obj.weighted_hessian(p0, np.ones(1))
            H += (Jc.T @ sp.diags(w**2) @ Jc).toarray()
            H += cons.weighted_hessian(pc, w)
            H = 0.5 * (H + H.T)
            dy = _newton_direction(H, grad)
            lam2 = float(-grad @ dy)
            self.steps += 1
            # centring error costs about lam2 / t in the objective
            if lam2 / 2 <= max(tol, 1e-12 * t):
                return y, True, lam2
            step = 1.0
            while True:
                yn = y + step * dy
                fcn, pcn = cons.values(yn)
                # keep some slack on every constraint; landing next to the
                # boundary costs hundreds of tiny Newton steps afterwards
                if np.all(fcn <= BOUNDARY_FRACTION * fc):
                    f0n, p0n = obj.values(yn)
                    phin = t * f0n[0] - np.sum(np.log(-fcn))
                    if phin <= phi - 0.25 * step * lam2:
                        break
                step *= 0.5
                if step < 1e-14:
                    return y, False, lam2
            y, f0, p0, fc, pc, phi = yn, f0n, p0n, fcn, pcn, phin
        return y, False, lam2


def _newton_direction(H, g):
    reg = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
    for _ in range(8):
        try:
            c = sla.cho_factor(H + reg * np.eye(len(g)), check_finite=False)
            return -sla.cho_solve(c, g, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            reg = scale * 1e-12 if reg == 0 else reg * 100
    return -np.linalg.lstsq(H, g, rcond=None)[0]


def _barrier_solve(barrier, y, n_con, tol, max_iter, t0=1.0, mu=20.0, stop_below=None):
    t = t0
    status = "max_iter"
    lam2 = np.inf
    while barrier.steps < max_iter:
        y, ok, lam2 = barrier.center(y, t, max_iter - barrier.steps, stop_below=stop_below)
        if stop_below is not None and barrier.obj.values(y)[0][0] < stop_below:
            return y, "optimal", t, lam2
        # a stalled line search at large t is a floating-point floor; the
        # decrement still bounds the centring error, so only bail when it is large
        if not ok and lam2 > 1e-3:
            break
        if (n_con + lam2) / t < tol:
            status = "optimal"
            break
        t *= mu
    return y, status, t, lam2


METHODS = ("conic", "barrier")


def solve_gp(
    prob: GPProblem,
    tol: float = 1e-9,
    max_iter: int = 2000,
    x0: Optional[Mapping[str, float]] = None,
    method: str = "conic",
    t0: float = 1.0,
    mu: float = 20.0,
) -> GPSolution:
    """Solve ``prob`` in log variables.

    Parameters
    ----------
    method : {"conic", "barrier"}
        ``"conic"`` hands the exponential-cone form to Clarabel (primal-dual,
        no warm start, ``x0`` ignored). ``"barrier"`` is the in-house damped
        Newton barrier method; slower, but it accepts a warm start ``x0``.
    """
    if tol <= 0:
        raise GPError("tol must be positive")
    if method == "conic":
        return _solve_conic(prob, tol, max_iter)
    if method != "barrier":
        raise GPError(f"unknown method {method!r}; expected one of {METHODS}")
    return _solve_barrier(prob, tol, max_iter, x0, t0, mu)


def _solve_barrier(prob, tol, max_iter, x0, t0, mu) -> GPSolution:
    names = prob.variables
    n = len(names)
    idx = {k: i for i, k in enumerate(names)}

    def build(extra: int):
        cons = _LogSumExpSet(n + extra)

        def padded(groups):
            return [(b, sp.hstack([A, sp.csr_matrix((A.shape[0], extra))]).tocsr() if extra else A) for b, A in groups]

        for c in prob.constraints_le:
            lin = np.zeros(n + extra)
            if extra:
                lin[n] = -1.0
            cons.add(padded(_groups_of(c, names)), lin)
        for k, (lo, hi) in prob.bounds.items():
            for bound, sign in ((hi, 1.0), (lo, -1.0)):
                if bound is None:
                    continue
                lin = np.zeros(n + extra)
                lin[idx[k]] = sign
                if extra:
                    lin[n] = -1.0
                cons.add([], lin, -sign * math.log(bound))
        return cons.finalize()

    obj = _LogSumExpSet(n)
    obj.add(_groups_of(prob.objective, names))
    obj.finalize()

    y = np.zeros(n)
    if x0 is not None:
        for k, v in x0.items():
            if k in idx:
                if not v > 0:
                    raise GPError(f"x0[{k!r}] must be positive")
                y[idx[k]] = math.log(v)
    for k, (lo, hi) in prob.bounds.items():
        i = idx[k]
        lo_l = -np.inf if lo is None else math.log(lo)
        hi_l = np.inf if hi is None else math.log(hi)
        if not lo_l < y[i] < hi_l:
            if np.isfinite(lo_l) and np.isfinite(hi_l):
                y[i] = 0.5 * (lo_l + hi_l)
            elif np.isfinite(lo_l):
                y[i] = lo_l + 1.0
            else:
                y[i] = hi_l - 1.0

    cons = build(0)
    n_con = cons.n_con
    steps = 0
    if n_con:
        fc, _ = cons.values(y)
        if np.max(fc) >= -1e-12:
            # phase I: minimise s subject to f_i(y) <= s
            cons1 = build(1)
            obj1 = _LogSumExpSet(n + 1)
            e = np.zeros(n + 1)
            e[n] = 1.0
            obj1.add([], e)
            obj1.finalize()
            s0 = float(np.max(fc)) + 1.0
            z = np.r_[y, s0]
            b1 = _Barrier(obj1, cons1)
            z, st, _, _ = _barrier_solve(b1, z, n_con, 1e-10, max_iter, mu=mu, stop_below=-1e-6)
            steps += b1.steps
            fc, _ = cons.values(z[:n])
            if np.max(fc) >= 0:
                log.info("phase I ended with max constraint %.3e (%s)", np.max(fc), st)
                return GPSolution(
                    {k: float(math.exp(v)) for k, v in zip(names, z[:n])},
                    float(np.exp(min(obj.values(z[:n])[0][0], 700.0))),
                    float(np.max(fc)),
                    "infeasible",
                    steps,
                )
            y = z[:n]

    bar = _Barrier(obj, cons)
    if n_con == 0:
        y, ok, lam2 = bar.center(y, 1.0, max_iter)
        status, t = ("optimal" if ok else "max_iter"), 1.0
        gap = lam2
    else:
        y, status, t, lam2 = _barrier_solve(bar, y, n_con, tol, max_iter - steps, t0=t0, mu=mu)
        # log-space suboptimality bound for an approximately centred point
        gap = (n_con + lam2) / t
    steps += bar.steps

    f0, p0 = obj.values(y)
    fc, pc = cons.values(y)
    grad = np.asarray(obj.jacobian(p0).toarray()).ravel()
    if n_con:
        lam = 1.0 / (-fc * t)
        grad = grad + cons.jacobian(pc).T @ lam
    return GPSolution(
        {k: float(math.exp(v)) for k, v in zip(names, y)},
        float(np.exp(min(f0[0], 700.0))),
        float(gap),
        status,
        steps,
        float(np.max(np.abs(grad))) if n else 0.0,
    )


_CLARABEL_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
}


def _conic_form(prob: GPProblem):
    """Exponential-cone form of ``prob`` in Clarabel's ``A x + s = b`` layout.

    Unknowns are ``[y, t, s_g, u_k]``: log variables, the objective epigraph,
    one epigraph per multi-term log-sum-exp group, and one per term. A group
    ``LSE(A y + b) <= s`` becomes ``exp(a_k y + b_k - s) <= u_k`` and
    ``sum u_k <= 1``; single-term groups stay linear.
    """
    names = prob.variables
    n = len(names)
    idx = {k: i for i, k in enumerate(names)}
    funcs = [(_groups_of(prob.objective, names), True)]
    funcs += [(_groups_of(c, names), False) for c in prob.constraints_le]

    n_multi = sum(A.shape[0] > 1 for groups, _ in funcs for _, A in groups)
    n_terms = sum(A.shape[0] for groups, _ in funcs for _, A in groups if A.shape[0] > 1)
    t_col = n
    s0 = n + 1
    u0 = s0 + n_multi
    n_cols = u0 + n_terms

    lin_r, lin_c, lin_v, b_lin = [], [], [], []
    exp_blocks, exp_b, exp_s, exp_u = [], [], [], []

    def lin_row(cols, vals, rhs):
        lin_r.extend([len(b_lin)] * len(cols))
        lin_c.extend(cols)
        lin_v.extend(vals)
        b_lin.append(rhs)

    g = 0
    k = 0
    for groups, is_obj in funcs:
        acc = sp.csr_matrix((1, n))
        rhs = 0.0
        extra = []
        for logc, A in groups:
            if A.shape[0] == 1:
                acc = acc + A
                rhs -= float(logc[0])
                continue
            T = A.shape[0]
            exp_blocks.append(A)
            exp_b.append(logc)
            exp_s.append(np.full(T, s0 + g))
            exp_u.append(u0 + k + np.arange(T))
            lin_row(list(u0 + k + np.arange(T)), [1.0] * T, 1.0)
            extra.append(s0 + g)
            g += 1
            k += T
        acc = acc.tocoo()
        cols = list(acc.col) + extra + ([t_col] if is_obj else [])
        vals = list(acc.data) + [1.0] * len(extra) + ([-1.0] if is_obj else [])
        lin_row(cols, vals, rhs)
    for name, (lo, hi) in prob.bounds.items():
        for bound, sign in ((hi, 1.0), (lo, -1.0)):
            if bound is not None:
                lin_row([idx[name]], [sign], sign * math.log(bound))

    n_lin = len(b_lin)
    A_lin = sp.csr_matrix((lin_v, (lin_r, lin_c)), shape=(n_lin, n_cols))
    b_lin = np.asarray(b_lin, dtype=float)

    if n_terms:
        E = sp.vstack(exp_blocks).tocoo()
        s_idx = np.concatenate(exp_s)
        u_idx = np.concatenate(exp_u)
        term = np.arange(n_terms)
        # row 3i: s = a_k y + b_k - s_g ; row 3i+1: s = 1 ; row 3i+2: s = u_k
        r = np.concatenate([3 * E.row, 3 * term, 3 * term + 2])
        c = np.concatenate([E.col, s_idx, u_idx])
        v = np.concatenate([-E.data, np.ones(n_terms), -np.ones(n_terms)])
        A_exp = sp.csr_matrix((v, (r, c)), shape=(3 * n_terms, n_cols))
        b_exp = np.zeros(3 * n_terms)
        b_exp[0::3] = np.concatenate(exp_b)
        b_exp[1::3] = 1.0
    else:
        A_exp = sp.csr_matrix((0, n_cols))
        b_exp = np.zeros(0)
    A = sp.vstack([A_lin, A_exp]).tocsc()
    b = np.r_[b_lin, b_exp]
    q = np.zeros(n_cols)
    q[t_col] = 1.0
    return A, b, q, n_lin, n_terms


def _solve_conic(prob: GPProblem, tol: float, max_iter: int) -> GPSolution:
    import clarabel

    names = prob.variables
    n = len(names)
    A, b, q, n_lin, n_terms = _conic_form(prob)
    cones = []
    if n_lin:
        cones.append(clarabel.NonnegativeConeT(n_lin))
    cones += [clarabel.ExponentialConeT()] * n_terms
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(min(max_iter, 500))
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    P = sp.csc_matrix((len(q), len(q)))
    res = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    name = str(res.status).split(".")[-1]
    status = _CLARABEL_STATUS.get(name, "max_iter")
    y = np.clip(np.asarray(res.x[:n], dtype=float), -700.0, 700.0)
    assignment = {k: float(math.exp(v)) for k, v in zip(names, y)}
    obj = eval_posynomial(prob.objective, assignment) if status != "infeasible" else float("nan")
    gap = abs(res.obj_val - res.obj_val_dual) / max(1.0, abs(res.obj_val))
    kkt = float(max(res.r_prim, res.r_dual, gap))
    # reduced-accuracy exits are still fine when they meet the caller's tol
    if name == "AlmostSolved" and kkt <= tol:
        status = "optimal"
    return GPSolution(
        assignment,
        float(obj),
        kkt,
        status,
        int(res.iterations),
    )
