"""Superimposed data + energy waveform design by successive geometric programming.

The optimisation variables live on the time-frequency grid: data amplitudes
``A_D[n,m]``, energy amplitudes ``A_E[n,m]``, the EH splitting ratio ``rho``
and the data splitting ratio ``rho_bar``. Auxiliary variables are ``eta``
(epigraph of the harvested DC) and ``gamma[n,m]`` (lower bounds on the
per-element received power used by the rate constraint). Because the ISFFT
is unitary, the power budget is the same in both domains and the DD-domain
design is the SFFT of the TF design.

Each outer iteration condenses the two posynomials that appear in
denominators (the DC expansion and the per-element received power) into
monomials at the current iterate, solves the resulting GP, and repeats until
the DC stops improving.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import ehmodel, ratemodel
from .channel import TFChannel
from .ehmodel import EHCircuit, quadruple_set
from .gpcore import (
    GPProblem,
    GPSolution,
    Monomial,
    Posynomial,
    PosynomialProduct,
    amgm_condense,
    solve_gp,
    var,
)
from .grids import GridDims, sfft
from .units import db_to_lin, dbm_to_watts

log = logging.getLogger(__name__)

ZETA_MIN = 0.02
AMP_FLOOR = 1e-6
RATIO_FLOOR = 1e-8
GAMMA_FLOOR = 1e-2
ETA_FLOOR = 1e-6


class DesignInfeasible(RuntimeError):
    pass


class DesignNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SystemParams:
    dims: GridDims = GridDims(12, 12)
    df: float = 15e3
    fc: float = 27e9
    p_tx: float = dbm_to_watts(36.1)
    p_pilot: float = dbm_to_watts(20.0)
    p_peak: Optional[float] = None  # defaults to twice the mean per-slot power
    p_noise: float = dbm_to_watts(-70.0)
    lam: float = 0.1
    r_min: float = 40.0
    circuit: EHCircuit = EHCircuit()
    rx_gain_db: float = 2.0
    path_loss_db: float = -50.0
    literal_quartic: bool = False

    def __post_init__(self):
        if not self.p_tx > self.p_pilot >= 0:
            raise ValueError("need p_tx > p_pilot >= 0")
        if self.p_peak is None:
            object.__setattr__(self, "p_peak", 4.0 * self.p_o / self.dims.n_slots)
        if not self.p_peak > 0:
            raise ValueError("p_peak must be positive")
        if not self.p_noise > 0:
            raise ValueError("p_noise must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.r_min < 0:
            raise ValueError("r_min must be >= 0")

    @property
    def p_o(self) -> float:
        return self.p_tx - self.p_pilot

    @property
    def channel_amplitude(self) -> float:
        """Scalar applied to unit-power channel gains (path loss and rx gain)."""
        return math.sqrt(db_to_lin(self.path_loss_db + self.rx_gain_db))

    @property
    def symbol_duration(self) -> float:
        return 1.0 / self.df


@dataclass
class DesignVariables:
    a_d: np.ndarray
    a_e: np.ndarray
    rho: float
    rho_bar: float

    @property
    def power(self) -> float:
        return 0.5 * float(np.sum(self.a_d**2) + np.sum(self.a_e**2))

    @property
    def slot_power(self) -> np.ndarray:
        return np.sum(self.a_d**2 + self.a_e**2, axis=1)

    @property
    def data_fraction(self) -> float:
        total = np.sum(self.a_d**2) + np.sum(self.a_e**2)
        return float(np.sum(self.a_d**2) / total)

    @property
    def energy_fraction(self) -> float:
        return 1.0 - self.data_fraction


def design_i_out(v: DesignVariables, ch: TFChannel, params: SystemParams) -> float:
    return ehmodel.i_out_direct(
        v.a_d, v.a_e, ch.hmag, ch.err_var, min(v.rho, 1.0), params.circuit, literal=params.literal_quartic
    )


def design_rate(v: DesignVariables, ch: TFChannel, params: SystemParams) -> ratemodel.RateReport:
    return ratemodel.rate(v.a_d, v.a_e, ch.hmag, ch.err_var, min(v.rho_bar, 1.0), params.lam, params.p_noise)


def p1_violations(v: DesignVariables, ch: TFChannel, params: SystemParams) -> dict:
    """Worst violation of each original constraint (<= 0 means satisfied)."""
    rep = design_rate(v, ch, params)
    return {
        "rate_bits": float(params.r_min - np.min(rep.per_slot)),
        "power_rel": v.power / params.p_o - 1.0,
        "peak_rel": float(np.max(v.slot_power) / params.p_peak - 1.0),
        "split": v.rho + v.rho_bar - 1.0,
        "split_slack": 1.0 - (v.rho + v.rho_bar),
    }


def _clamp_zeta(z: float) -> float:
    return min(max(z, ZETA_MIN), 1.0 - ZETA_MIN)


def capacity_estimate(ch: TFChannel, params: SystemParams) -> tuple[float, float]:
    """Average fading ``h_L`` and the per-element capacity estimate ``C_max`` (bits)."""
    h_l = float(np.sum(ch.hmag**2 + ch.err_var) / params.dims.size)
    c_max = math.log2(1.0 + params.p_o * h_l / params.p_noise)
    return h_l, c_max


def amplitude_floor(params: SystemParams) -> float:
    return AMP_FLOOR * math.sqrt(params.p_o / params.dims.size)


def initialize(ch: TFChannel, params: SystemParams, zeta: Optional[float] = None) -> DesignVariables:
    N, M = params.dims.shape
    _, c_max = capacity_estimate(ch, params)
    if params.r_min > M * c_max:
        raise DesignInfeasible(f"r_min={params.r_min:.3g} exceeds the capacity estimate {M * c_max:.3g} bits/slot")
    if zeta is None:
        # r_min is per slot, c_max per element
        zeta = params.r_min / (M * c_max)
    zeta = _clamp_zeta(zeta)
    floor = amplitude_floor(params)
    size = params.dims.size
    a_d = np.full((N, M), max(math.sqrt(params.p_o * zeta / size), floor))
    a_e = np.full((N, M), max(math.sqrt(params.p_o * (1 - zeta) / size), floor))
    return DesignVariables(a_d, a_e, 1.0 - zeta, zeta)


@lru_cache(maxsize=None)
def _quartic_multisets(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct sorted index multisets of the quadruple set and their counts."""
    counts: dict[tuple, int] = {}
    for q in quadruple_set(M):
        key = tuple(sorted(q))
        counts[key] = counts.get(key, 0) + 1
    keys = sorted(counts)
    return np.array(keys, dtype=int).reshape(-1, 4), np.array([counts[k] for k in keys], dtype=float)


class _TermBuilder:
    def __init__(self, n_vars: int):
        self.n_vars = n_vars
        self.coeffs = []
        self.rows = []
        self.cols = []
        self.vals = []
        self.n = 0

    def add(self, coeffs, factors):
        """``factors`` is a list of (column array, exponent) pairs, one entry per term."""
        coeffs = np.asarray(coeffs, float).ravel()
        keep = coeffs > 0
        coeffs = coeffs[keep]
        K = coeffs.size
        if K == 0:
            return
        r = self.n + np.arange(K)
        for cols, a in factors:
            cols = np.broadcast_to(np.asarray(cols).ravel(), keep.shape)[keep]
            self.rows.append(r)
            self.cols.append(cols)
            self.vals.append(np.full(K, float(a)))
        self.coeffs.append(coeffs)
        self.n += K

    def build(self, names) -> Posynomial:
        exps = sp.csr_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.n, self.n_vars),
        )
        return Posynomial(np.concatenate(self.coeffs), exps, names)


class P2Builder:
    """Caches the channel-dependent posynomials of one design instance.

    ``tied=True`` forces amplitudes and gammas to be constant across time
    slots (the frequency-domain-only design used for the OFDM baseline).
    """

    def __init__(self, ch: TFChannel, params: SystemParams, tied: bool = False):
        if ch.h_est.shape != params.dims.shape:
            raise ValueError(f"channel grid {ch.h_est.shape} does not match dims {params.dims.shape}")
        self.ch = ch
        self.params = params
        self.tied = tied
        N, M = params.dims.shape
        self.N, self.M = N, M
        self.hmag = ch.hmag
        self.err_var = ch.err_var
        self.gain = self.hmag**2 + self.err_var
        slot = (lambda n: "*") if tied else (lambda n: str(n))
        self.ad_names = np.array([[f"A_D[{slot(n)},{m}]" for m in range(M)] for n in range(N)])
        self.ae_names = np.array([[f"A_E[{slot(n)},{m}]" for m in range(M)] for n in range(N)])
        self.gamma_names = np.array([[f"gamma[{slot(n)},{m}]" for m in range(M)] for n in range(N)])
        self.slots = [0] if tied else list(range(N))
        self.iout = self._iout_posynomial()
        self.kappa = {(n, m): self._kappa(n, m) for n in self.slots for m in range(M)}
        self.rate_factors = {n: [self._f2(n, m) for m in range(M)] for n in self.slots}
        self.power, self.peaks = self._power_posynomials()

    @property
    def variables(self) -> tuple[str, ...]:
        names = set(self.ad_names.ravel()) | set(self.ae_names.ravel())
        if not self.rate_free:
            names |= set(self.gamma_names.ravel())
        return tuple(sorted(names)) + ("eta", "rho", "rho_bar")

    @property
    def rate_free(self) -> bool:
        # C_n >= 0 always holds; its condensed surrogate only adds numerical trouble
        # as A_D approaches the floor
        return self.params.r_min == 0

    def _iout_posynomial(self) -> Posynomial:
        p = self.params
        N, M = self.N, self.M
        amp_names = sorted(set(self.ad_names.ravel()) | set(self.ae_names.ravel()))
        names = amp_names + ["rho"]
        idx = {k: i for i, k in enumerate(names)}
        ad = np.vectorize(idx.__getitem__)(self.ad_names)
        ae = np.vectorize(idx.__getitem__)(self.ae_names)
        rho = idx["rho"]
        k2r = p.circuit.k2 * p.circuit.r_ant
        k4r = p.circuit.k4 * p.circuit.r_ant**2
        c = self.gain
        tb = _TermBuilder(len(names))

        tb.add(k2r * 0.5 * c, [(ad, 2), (rho, 1)])
        tb.add(k2r * 0.5 * c, [(ae, 2), (rho, 1)])

        uniq, mult = _quartic_multisets(M)
        sig4 = self.err_var**2
        hprod = np.prod(self.hmag[:, uniq], axis=2)  # (N, U)
        base = k4r * 0.375 * mult[None, :]
        ae_q = [ae[:, uniq[:, j]] for j in range(4)]
        if p.literal_quartic:
            tb.add(base * hprod, [(a, 1) for a in ae_q] + [(rho, 2)])
            ad_q = [ad[:, uniq[:, j]] for j in range(4)]
            tb.add(base * sig4 * np.ones_like(hprod), [(a, 1) for a in ad_q] + [(rho, 2)])
        else:
            tb.add(base * (hprod + sig4), [(a, 1) for a in ae_q] + [(rho, 2)])

        iu, ju = np.triu_indices(M)
        pair = np.where(iu == ju, 1.0, 2.0)
        tb.add(k4r * 0.75 * pair[None, :] * c[:, iu] * c[:, ju], [(ad[:, iu], 2), (ad[:, ju], 2), (rho, 2)])

        cf = c.ravel()
        ei, dj = np.meshgrid(np.arange(N * M), np.arange(N * M), indexing="ij")
        tb.add(
            k4r * 6.0 * 0.25 * cf[ei] * cf[dj],
            [(ae.ravel()[ei], 2), (ad.ravel()[dj], 2), (rho, 2)],
        )
        return tb.build(names).merged()

    def _kappa(self, n: int, m: int) -> Posynomial:
        """lambda * P_E + P_D + P_noise as five monomials (zero terms dropped)."""
        p = self.params
        h2 = self.hmag[n, m] ** 2
        s2 = self.err_var
        rb, ad, ae = var("rho_bar"), var(self.ad_names[n, m]), var(self.ae_names[n, m])
        terms = []
        for coeff, mono in (
            (p.lam * h2, rb * ae**2),
            (p.lam * s2, rb * ae**2),
            (h2, rb * ad**2),
            (s2, rb * ad**2),
        ):
            if coeff > 0:
                terms.append(mono * coeff)
        terms.append(Monomial(p.p_noise))
        return Posynomial.from_monomials(terms)

    def _f2(self, n: int, m: int) -> Posynomial:
        """(lambda * P_E + rho_bar A_D^2 sigma^2 + P_noise) / gamma."""
        p = self.params
        h2 = self.hmag[n, m] ** 2
        s2 = self.err_var
        rb, ad, ae = var("rho_bar"), var(self.ad_names[n, m]), var(self.ae_names[n, m])
        g = var(self.gamma_names[n, m]) ** -1
        terms = []
        for coeff, mono in ((p.lam * h2, rb * ae**2), (p.lam * s2, rb * ae**2), (s2, rb * ad**2)):
            if coeff > 0:
                terms.append(mono * g * coeff)
        terms.append(g * p.p_noise)
        return Posynomial.from_monomials(terms)

    def _power_posynomials(self):
        p = self.params
        reps = self.N if self.tied else 1
        monos = []
        for n in self.slots:
            for m in range(self.M):
                for name in (self.ad_names[n, m], self.ae_names[n, m]):
                    monos.append(var(name) ** 2 * (0.5 * reps / p.p_o))
        power = Posynomial.from_monomials(monos)
        peaks = {}
        for n in self.slots:
            monos = []
            for m in range(self.M):
                for name in (self.ad_names[n, m], self.ae_names[n, m]):
                    monos.append(var(name) ** 2 * (1.0 / p.p_peak))
            peaks[n] = Posynomial.from_monomials(monos)
        return power, peaks

    def point(self, v: DesignVariables) -> dict:
        pt = {"rho": max(v.rho, RATIO_FLOOR), "rho_bar": max(v.rho_bar, RATIO_FLOOR)}
        floor = amplitude_floor(self.params)
        for n in range(self.N):
            for m in range(self.M):
                pt[self.ad_names[n, m]] = max(float(v.a_d[n, m]), floor)
                pt[self.ae_names[n, m]] = max(float(v.a_e[n, m]), floor)
        return pt

    def variables_from(self, assignment: dict) -> DesignVariables:
        get = np.vectorize(assignment.__getitem__, otypes=[float])
        return DesignVariables(
            get(self.ad_names), get(self.ae_names), float(assignment["rho"]), float(assignment["rho_bar"])
        )

    def problem(self, point: dict) -> GPProblem:
        p = self.params
        cons, labels = [], []
        iout_hat = amgm_condense(self.iout, point)
        cons.append(var("eta") / iout_hat)
        labels.append("dc")
        scale = 2.0**p.r_min
        for n in [] if self.rate_free else self.slots:
            factors = list(self.rate_factors[n])
            factors[0] = factors[0] * scale
            cons.append(PosynomialProduct(tuple(factors)))
            labels.append(f"rate[{n}]")
        for (n, m), kappa in {} if self.rate_free else self.kappa.items():
            cons.append(var(self.gamma_names[n, m]) / amgm_condense(kappa, point))
            labels.append(f"gamma[{n},{m}]")
        cons.append(self.power)
        labels.append("power")
        for n, peak in self.peaks.items():
            cons.append(peak)
            labels.append(f"peak[{n}]")
        cons.append(var("rho") + var("rho_bar"))
        labels.append("split")
        floor = amplitude_floor(p)
        bounds = {k: (floor, None) for k in sorted(set(self.ad_names.ravel()) | set(self.ae_names.ravel()))}
        bounds["rho"] = (RATIO_FLOOR, None)
        bounds["rho_bar"] = (RATIO_FLOOR, None)
        # compact boxes on the auxiliaries, inactive at any optimum
        for k in [] if self.rate_free else sorted(set(self.gamma_names.ravel())):
            bounds[k] = (p.p_noise * GAMMA_FLOOR, None)
        bounds["eta"] = (iout_hat.eval(point) * ETA_FLOOR, None)
        return GPProblem(var("eta") ** -1, cons, bounds, variables=self.variables, labels=labels)


def build_p2(ch: TFChannel, params: SystemParams, point: DesignVariables, tied: bool = False) -> GPProblem:
    b = P2Builder(ch, params, tied=tied)
    return b.problem(b.point(point))


@dataclass
class DesignSolution:
    vars: DesignVariables
    x_d_dd: np.ndarray
    x_e_dd: np.ndarray
    i_out: float
    rate: ratemodel.RateReport
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    i_out_init: float = 0.0
    waveform: str = "otfs"

    @property
    def energy_only(self) -> bool:
        return self.vars.data_fraction <= 0.01

    def to_json(self) -> dict:
        v = self.vars
        return {
            "waveform": self.waveform,
            "i_out": self.i_out,
            "i_out_init": self.i_out_init,
            "rho": v.rho,
            "rho_bar": v.rho_bar,
            "a_d": v.a_d.tolist(),
            "a_e": v.a_e.tolist(),
            "data_power_fraction": v.data_fraction,
            "energy_only": self.energy_only,
            "rate": self.rate.to_json(),
            "trace": self.trace,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def to_dd(v: DesignVariables, ch: TFChannel) -> tuple[np.ndarray, np.ndarray]:
    """DD-domain data power-control grid and energy grid (phase pre-compensated)."""
    x_d = sfft(v.a_d.astype(np.complex128))
    x_e = sfft(v.a_e * np.exp(-1j * np.angle(ch.h_est)))
    return x_d, x_e


def _solve(prob, x0: dict, tol: float, method: str) -> GPSolution:
    """Inner solve; an inexact conic result is retried with the barrier method."""
    sol = solve_gp(prob, tol=tol, x0=x0, method=method)
    if sol.status == "max_iter" and method != "barrier":
        log.info("conic solve ended inexactly (kkt %.2e); retrying with barrier", sol.kkt_residual)
        sol = solve_gp(prob, tol=tol, x0=x0, method="barrier")
    return sol


def _gp_start(builder: P2Builder, pt: dict, prev: Optional[GPSolution]) -> dict:
    if prev is not None:
        return prev.assignment
    x0 = dict(pt)
    x0["eta"] = 0.5 * builder.iout.eval(pt)
    for (n, m), kappa in {} if builder.rate_free else builder.kappa.items():
        x0[builder.gamma_names[n, m]] = 0.5 * kappa.eval(pt)
    return x0


@dataclass(frozen=True)
class Extrapolation:
    """Safeguarded extrapolation of the condensation point.

    After two iterates ``x0 -> x1`` the next subproblem is condensed at
    ``x1 * (x1 / x0) ** beta`` (log-space step). Its solution is kept only if
    the exact DC strictly improves; otherwise the plain subproblem at ``x1``
    is solved. ``beta`` grows after every success and shrinks after every
    rejection.
    """

    enabled: bool = True
    beta0: float = 1.0
    growth: float = 1.25
    cap: float = 10.0
    shrink: float = 2.0

    def __post_init__(self):
        if self.beta0 <= 0 or self.growth < 1 or self.cap < self.beta0 or self.shrink < 1:
            raise ValueError("invalid extrapolation settings")


P1_TOL = 1e-6


def _p1_ok(v: DesignVariables, ch: TFChannel, params: SystemParams) -> bool:
    viol = p1_violations(v, ch, params)
    return all(viol[k] <= P1_TOL for k in ("rate_bits", "power_rel", "peak_rel", "split"))


def _extrapolate(builder: P2Builder, v_old: DesignVariables, v_new: DesignVariables, beta: float) -> dict:
    old, new = builder.point(v_old), builder.point(v_new)
    floor = amplitude_floor(builder.params)
    z = {k: max(new[k] * (new[k] / old[k]) ** beta, floor) for k in new}
    for k in ("rho", "rho_bar"):
        z[k] = min(max(new[k] * (new[k] / old[k]) ** beta, RATIO_FLOOR), 1.0)
    return z


def run(
    ch: TFChannel,
    params: SystemParams,
    eps: float = 1e-3,
    max_outer: int = 30,
    tied: bool = False,
    gp_tol: float = 1e-7,
    strict: bool = False,
    gp_method: str = "conic",
    extrapolation: Extrapolation = Extrapolation(),
) -> DesignSolution:
    """Successive-GP design.

    Stops when the DC changes by less than ``eps`` relative to its current
    value. ``max_outer`` caps the number of GP subproblems solved, rejected
    extrapolations included.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if max_outer < 1:
        raise ValueError("max_outer must be >= 1")
    builder = P2Builder(ch, params, tied=tied)
    v = initialize(ch, params)
    i_init = design_i_out(v, ch, params)

    sol = None
    solves = 0
    for attempt, zeta in enumerate((None, 1.0 - ZETA_MIN)):
        if attempt:
            v = initialize(ch, params, zeta=zeta)
        pt = builder.point(v)
        sol = _solve(builder.problem(pt), _gp_start(builder, pt, None), gp_tol, gp_method)
        solves += 1
        if sol.status != "infeasible":
            break
        log.info("initial GP infeasible (attempt %d), retrying from a data-heavy start", attempt)
    if sol.status == "infeasible":
        raise DesignInfeasible(f"r_min={params.r_min:.4g} bits/slot not reachable from any start")

    v_prev = None
    v = builder.variables_from(sol.assignment)
    trace = [{"i_out": design_i_out(v, ch, params), "gp_status": sol.status, "step": "plain", "solves": solves}]
    i_prev = 0.0
    beta = extrapolation.beta0
    converged = False
    while True:
        i_new = trace[-1]["i_out"]
        small = abs(i_new - i_prev) < eps * abs(i_new)
        # only a plain step certifies a fixed point; a stalled extrapolation
        # is followed by a plain step before stopping
        if small and trace[-1]["step"] == "plain":
            converged = True
            break
        if solves >= max_outer:
            break
        step = None
        if extrapolation.enabled and v_prev is not None and not small:
            z = _extrapolate(builder, v_prev, v, beta)
            trial = _solve(builder.problem(z), None, gp_tol, gp_method)
            solves += 1
            if trial.status != "infeasible":
                vt = builder.variables_from(trial.assignment)
                it = design_i_out(vt, ch, params)
                if it > i_new and _p1_ok(vt, ch, params):
                    step = (vt, trial, it, "extrapolated")
            if step is None:
                beta = max(extrapolation.beta0, beta / extrapolation.shrink)
                if solves >= max_outer:
                    break
            else:
                beta = min(beta * extrapolation.growth, extrapolation.cap)
        if step is None:
            pt = builder.point(v)
            nxt = _solve(builder.problem(pt), _gp_start(builder, pt, sol), gp_tol, gp_method)
            solves += 1
            if nxt.status == "infeasible":
                # the current iterate is feasible for this subproblem; keep it
                log.warning("GP reported infeasible after %d solves; stopping", solves)
                break
            vn = builder.variables_from(nxt.assignment)
            step = (vn, nxt, design_i_out(vn, ch, params), "plain")
        v_prev, v = v, step[0]
        sol = step[1]
        i_prev = i_new
        trace.append({"i_out": step[2], "gp_status": sol.status, "step": step[3], "solves": solves})
    if not converged:
        msg = f"no convergence within {max_outer} GP solves"
        if strict:
            raise DesignNotConverged(msg)
        log.warning(msg)

    x_d, x_e = to_dd(v, ch)
    return DesignSolution(
        vars=v,
        x_d_dd=x_d,
        x_e_dd=x_e,
        i_out=trace[-1]["i_out"],
        rate=design_rate(v, ch, params),
        trace=trace,
        iterations=solves,
        converged=converged,
        i_out_init=i_init,
        waveform="ofdm" if tied else "otfs",
    )


def max_rate(ch: TFChannel, params: SystemParams, tied: bool = False, rel_tol: float = 1e-7, max_outer: int = 50):
    """Largest per-slot rate reachable with data only (rho_bar -> 1).

    Returns ``(rate_bits, DesignVariables)``. Solved by the same successive
    condensation, with the objective replaced by ``2**R``.
    """
    zero_energy = replace(params, lam=0.0, r_min=0.0)
    b = P2Builder(ch, zero_energy, tied=tied)
    u = var("u")
    floor = amplitude_floor(params)
    amp = sorted(set(b.ad_names.ravel()))

    def problem(pt):
        cons = []
        for n in b.slots:
            factors = []
            for m in range(b.M):
                s2 = b.err_var
                g = var(b.gamma_names[n, m]) ** -1
                terms = [g * params.p_noise]
                if s2 > 0:
                    terms.append(var(b.ad_names[n, m]) ** 2 * g * s2)
                factors.append(Posynomial.from_monomials(terms))
            factors[0] = factors[0] * u
            cons.append(PosynomialProduct(tuple(factors)))
            for m in range(b.M):
                kappa = Posynomial.from_monomials(
                    [var(b.ad_names[n, m]) ** 2 * float(b.gain[n, m]), Monomial(params.p_noise)]
                )
                cons.append(var(b.gamma_names[n, m]) / amgm_condense(kappa, pt))
        reps = b.N if tied else 1
        cons.append(Posynomial.from_monomials([var(k) ** 2 * (0.5 * reps / params.p_o) for k in amp]))
        for n in b.slots:
            cons.append(Posynomial.from_monomials([var(b.ad_names[n, m]) ** 2 / params.p_peak for m in range(b.M)]))
        bounds = {k: (floor, None) for k in amp}
        bounds.update({k: (params.p_noise * GAMMA_FLOOR, None) for k in sorted(set(b.gamma_names.ravel()))})
        bounds["u"] = (1.0, None)
        return GPProblem(u**-1, cons, bounds)

    N, M = params.dims.shape
    a = np.full((N, M), math.sqrt(params.p_o / (N * M)))
    best = -np.inf
    prev = None
    for _ in range(max_outer):
        pt = {b.ad_names[n, m]: float(a[n, m]) for n in range(N) for m in range(M)}
        sol = _solve(problem(pt), prev, 1e-8, "conic")
        if sol.status == "infeasible":
            break
        prev = sol.assignment
        a = np.vectorize(sol.assignment.__getitem__, otypes=[float])(b.ad_names)
        zeros = np.zeros_like(a)
        r = float(np.min(ratemodel.rate(a, zeros, b.hmag, b.err_var, 1.0, 0.0, params.p_noise).per_slot))
        if r - best < rel_tol * abs(r):
            best = max(best, r)
            break
        best = r
    return best, DesignVariables(a, np.zeros_like(a), 0.0, 1.0)
