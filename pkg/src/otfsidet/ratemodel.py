"""Per-element SINR and per-slot achievable rate under power splitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RateReport:
    per_slot: np.ndarray
    average: float
    sinr: np.ndarray

    def to_json(self) -> dict:
        return {"per_slot": [float(c) for c in self.per_slot], "average": float(self.average)}


def _check_rho_bar(rho_bar: float):
    if not 0.0 <= rho_bar <= 1.0:
        raise ValueError(f"rho_bar must lie in [0, 1], got {rho_bar}")


def split_powers(a_d, a_e, hmag, err_var: float, rho_bar: float) -> tuple[np.ndarray, np.ndarray]:
    """Received data and energy powers in the data branch, per element."""
    _check_rho_bar(rho_bar)
    gain = np.asarray(hmag, float) ** 2 + err_var
    p_d = rho_bar * np.asarray(a_d, float) ** 2 * gain
    p_e = rho_bar * np.asarray(a_e, float) ** 2 * gain
    return p_d, p_e


def rate(a_d, a_e, hmag, err_var: float, rho_bar: float, lam: float, p_noise: float) -> RateReport:
    _check_rho_bar(rho_bar)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if p_noise <= 0:
        raise ValueError("p_noise must be positive")
    a_d = np.asarray(a_d, float)
    hmag = np.asarray(hmag, float)
    _, p_e = split_powers(a_d, a_e, hmag, err_var, rho_bar)
    useful = rho_bar * a_d**2 * hmag**2
    interference = lam * p_e + rho_bar * a_d**2 * err_var + p_noise
    sinr = useful / interference
    per_slot = np.sum(np.log2(1.0 + sinr), axis=1)
    return RateReport(per_slot=per_slot, average=float(np.mean(per_slot)), sinr=sinr)
