"""Nonlinear (2nd + 4th order) rectenna model in closed form.

Amplitude convention: ``a_d[n, m] = |X_D[n, m]|`` and ``a_e[n, m] = |X_E[n, m]|``.
Energy-signal phases are assumed to pre-compensate the estimated channel,
so the deterministic quartic term multiplies magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class EHCircuit:
    k2: float = 0.0034
    k4: float = 0.3859
    r_ant: float = 50.0

    def __post_init__(self):
        if min(self.k2, self.k4, self.r_ant) <= 0:
            raise ValueError("circuit parameters must be positive")


@dataclass(frozen=True)
class PsiTerms:
    psi_yd2: float
    psi_ye2: float
    psi_yd4: float
    psi_ye4: float


def _check(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ValueError(f"shape mismatch: {shape} vs {np.shape(a)}")
    for a in arrays:
        if np.any(np.asarray(a) < 0):
            raise ValueError("amplitudes and channel magnitudes must be nonnegative")


@lru_cache(maxsize=None)
def quadruple_set(m_subcarriers: int) -> tuple[tuple[int, int, int, int], ...]:
    """All (m0, m1, m2, m3) in 0..M-1 with m0 + m1 == m2 + m3, lexicographic."""
    if m_subcarriers < 1:
        raise ValueError("M must be >= 1")
    M = m_subcarriers
    by_sum: dict[int, list[tuple[int, int]]] = {}
    for a in range(M):
        for b in range(M):
            by_sum.setdefault(a + b, []).append((a, b))
    out = []
    for m0 in range(M):
        for m1 in range(M):
            for m2, m3 in by_sum[m0 + m1]:
                out.append((m0, m1, m2, m3))
    return tuple(out)


def quad_sum(v: np.ndarray) -> np.ndarray:
    """Sum over m0+m1=m2+m3 of v[m0] v[m1] conj(v[m2] v[m3]) along the last axis.

    Equal to sum_s |c_s|^2 with c the self-convolution of ``v``, so the result
    is real and nonnegative for any complex input.
    """
    v = np.asarray(v)
    M = v.shape[-1]
    L = 2 * M
    c = np.fft.ifft(np.fft.fft(v, L, axis=-1) ** 2, axis=-1)[..., : 2 * M - 1]
    return np.sum(np.abs(c) ** 2, axis=-1)


def psi_yd2(a_d, hmag, err_var: float) -> float:
    _check(a_d, hmag)
    a_d = np.asarray(a_d, float)
    return 0.5 * float(np.sum(a_d**2 * (np.asarray(hmag) ** 2 + err_var)))


def psi_ye2(a_e, hmag, err_var: float) -> float:
    _check(a_e, hmag)
    a_e = np.asarray(a_e, float)
    return 0.5 * float(np.sum(a_e**2 * (np.asarray(hmag) ** 2 + err_var)))


def psi_ye4(a_e, hmag, err_std: float, literal: bool = False, a_d=None) -> float:
    """Deterministic quartic term.

    The error product is taken as prod_j (a_e[n, m_j] * err_std). With
    ``literal=True`` the data amplitudes ``a_d`` are used in that product
    instead, which is the other reading of the same expression.
    """
    _check(a_e, hmag)
    a_e = np.asarray(a_e, float)
    y = a_e * np.asarray(hmag, float)
    total = np.sum(quad_sum(y))
    if err_std > 0:
        if literal:
            if a_d is None:
                raise ValueError("literal variant needs a_d")
            _check(a_e, a_d)
            err = np.asarray(a_d, float) * err_std
        else:
            err = a_e * err_std
        total += np.sum(quad_sum(err))
    return 0.375 * float(np.real(total))


def psi_yd4(a_d, hmag, err_var: float) -> float:
    # TODO: optional exact error term; for per-element random error the
    # expectation adds 0.75 * sum(a_d**4 * (2 |h|^2 err_var + err_var**2))
    _check(a_d, hmag)
    a_d = np.asarray(a_d, float)
    per_slot = np.sum(a_d**2 * (np.asarray(hmag) ** 2 + err_var), axis=1)
    return 0.75 * float(np.sum(per_slot**2))


def psi_terms(a_d, a_e, hmag, err_var: float, literal: bool = False) -> PsiTerms:
    err_std = float(np.sqrt(err_var))
    return PsiTerms(
        psi_yd2=psi_yd2(a_d, hmag, err_var),
        psi_ye2=psi_ye2(a_e, hmag, err_var),
        psi_yd4=psi_yd4(a_d, hmag, err_var),
        psi_ye4=psi_ye4(a_e, hmag, err_std, literal=literal, a_d=a_d),
    )


def i_out(psi: PsiTerms, rho: float, circuit: EHCircuit) -> float:
    """Output DC from the moment terms and the EH power-splitting ratio."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    k2, k4, R = circuit.k2, circuit.k4, circuit.r_ant
    quad = psi.psi_ye2 + psi.psi_yd2
    quart = psi.psi_ye4 + psi.psi_yd4 + 6.0 * psi.psi_ye2 * psi.psi_yd2
    return k2 * rho * R * quad + k4 * rho**2 * R**2 * quart


def i_out_direct(a_d, a_e, hmag, err_var: float, rho: float, circuit: EHCircuit, literal: bool = False) -> float:
    return i_out(psi_terms(a_d, a_e, hmag, err_var, literal=literal), rho, circuit)
