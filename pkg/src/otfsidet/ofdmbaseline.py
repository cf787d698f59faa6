"""OFDM benchmark: frequency-only design, evaluated through a sample-level channel.

The design side reuses the successive-GP designer with amplitudes tied across
time slots and a time-averaged channel. The evaluation side builds the actual
OFDM waveform (IFFT per block plus cyclic prefix), passes it through the
tapped delay-Doppler channel

    y[t] = sum_i h_i x[t - l_i] exp(j2pi k_i t / (N M))

and demodulates. Doppler taps that are not multiples of N leak power into
neighbouring subcarriers (ICI); the harvested-energy moments are measured on
the received grid because the closed forms assume a per-element channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import designer, ehmodel
from .channel import DDChannel, TFChannel
from .designer import DesignSolution, DesignVariables, SystemParams
from .linksim import Estimate, McConfig, _cn, _estimate

AVERAGING = ("rms", "coherent")


def averaged_channel(ch: TFChannel, mode: str = "rms") -> TFChannel:
    """n-constant channel seen by a frequency-only designer.

    ``"coherent"`` is |mean_n H[n, m]|, which cancels every path whose Doppler
    tap is a nonzero multiple of 1/N. ``"rms"`` keeps the average power,
    sqrt(mean_n |H[n, m]|^2), with the phase of the coherent mean.
    """
    H = ch.h_est
    coherent = H.mean(axis=0)
    if mode == "coherent":
        row = coherent
    elif mode == "rms":
        row = np.sqrt(np.mean(np.abs(H) ** 2, axis=0)) * np.exp(1j * np.angle(coherent))
    else:
        raise ValueError(f"unknown averaging {mode!r}; expected one of {AVERAGING}")
    return TFChannel(np.broadcast_to(row, H.shape).copy(), ch.err_var)


def budget_params(params: SystemParams, cp_len: int) -> SystemParams:
    """Shrink the power and peak budgets so that the CP copies fit in them."""
    M = params.dims.m_subcarriers
    scale = M / (M + cp_len)
    return replace(params, p_tx=params.p_pilot + params.p_o * scale, p_peak=params.p_peak * scale)


def design_ofdm(
    ch_est: TFChannel,
    params: SystemParams,
    cp_len: int = 0,
    averaging: str = "rms",
    cp_in_budget: bool = True,
    **run_kw,
) -> DesignSolution:
    """Per-subcarrier design (amplitudes constant over slots)."""
    if cp_len < 0:
        raise ValueError("cp_len must be >= 0")
    p = budget_params(params, cp_len) if cp_in_budget else params
    sol = designer.run(averaged_channel(ch_est, averaging), p, tied=True, **run_kw)
    return sol


# -- time-domain link -------------------------------------------------------


def modulate(X: np.ndarray, cp_len: int) -> np.ndarray:
    """IFFT per block and cyclic prefix; (..., N, M) -> (..., N * (M + cp_len))."""
    blocks = np.fft.ifft(X, axis=-1, norm="ortho")
    if cp_len:
        blocks = np.concatenate([blocks[..., -cp_len:], blocks], axis=-1)
    return blocks.reshape(blocks.shape[:-2] + (-1,))


def demodulate(y: np.ndarray, n_slots: int, m_subcarriers: int, cp_len: int) -> np.ndarray:
    blocks = y.reshape(y.shape[:-1] + (n_slots, m_subcarriers + cp_len))[..., cp_len:]
    return np.fft.fft(blocks, axis=-1, norm="ortho")


def apply_channel(x: np.ndarray, ch: DDChannel, n_slots: int, m_subcarriers: int) -> np.ndarray:
    """Tapped delay line with a per-sample Doppler ramp; samples before t=0 are zero."""
    T = x.shape[-1]
    t = np.arange(T)
    y = np.zeros(x.shape, dtype=np.complex128)
    for h, l, k in zip(ch.gains, ch.delay_taps, ch.doppler_taps):
        l = int(l)
        shifted = np.zeros_like(y)
        shifted[..., l:] = x[..., : T - l]
        y += h * np.exp(2j * np.pi * k * t / (n_slots * m_subcarriers)) * shifted
    return y


def check_cp(ch: DDChannel, cp_len: int):
    if ch.n_paths and cp_len < int(np.max(ch.delay_taps)):
        raise ValueError(f"cyclic prefix {cp_len} shorter than the largest delay tap {int(np.max(ch.delay_taps))}")


def effective_matrices(ch: DDChannel, n_slots: int, m_subcarriers: int, cp_len: int) -> np.ndarray:
    """Per-block subcarrier coupling G[n] with Y[n] = G[n] @ X[n]; shape (N, M, M).

    With the CP at least as long as every delay, each path acts on block n as
    F diag(ramp) P_l F^H, where P_l is a cyclic shift by l samples.
    """
    check_cp(ch, cp_len)
    N, M = n_slots, m_subcarriers
    tau = np.arange(M)
    F = np.exp(-2j * np.pi * np.outer(tau, tau) / M) / math.sqrt(M)
    G = np.zeros((N, M, M), dtype=np.complex128)
    for h, l, k in zip(ch.gains, ch.delay_taps, ch.doppler_taps):
        P = np.roll(np.eye(M), int(l), axis=0)
        for n in range(N):
            t = n * (M + cp_len) + cp_len + tau
            ramp = np.exp(2j * np.pi * k * t / (N * M))
            G[n] += h * (F * ramp[None, :]) @ P @ F.conj().T
    return G


@dataclass
class OfdmEvaluation:
    i_out: float
    rate: Estimate
    psi: dict
    signal_power: np.ndarray
    ici_power: np.ndarray
    energy_power: np.ndarray

    def to_json(self) -> dict:
        return {
            "waveform": "ofdm",
            "i_out": self.i_out,
            "rate": self.rate.to_json(),
            "psi": {k: v.to_json() for k, v in self.psi.items()},
            "ici_to_signal": float(np.sum(self.ici_power) / max(np.sum(self.signal_power), 1e-300)),
        }


def transmit_grids(v: DesignVariables, ch_design: TFChannel) -> tuple[np.ndarray, np.ndarray]:
    """Data amplitude grid and phase-aligned energy grid (n-constant phases)."""
    phase = np.angle(ch_design.h_est.mean(axis=0))
    return v.a_d, v.a_e * np.exp(-1j * phase)[None, :]


def evaluate_under_mobility(
    v: DesignVariables,
    ch_true: DDChannel,
    params: SystemParams,
    cfg: McConfig,
    cp_len: int,
    ch_design: Optional[TFChannel] = None,
) -> OfdmEvaluation:
    """Empirical DC and rate of an OFDM design over the true channel.

    ``ch_design`` fixes the energy-signal phases; by default it is the true
    channel's own TF response. Estimation error, if any, enters per element
    as ``e * X`` after demodulation.
    """
    check_cp(ch_true, cp_len)
    N, M = params.dims.shape
    if ch_design is None:
        from .channel import tf_from_dd

        ch_design = tf_from_dd(ch_true, params.dims)
    a_d, x_e = transmit_grids(v, ch_design)
    G = effective_matrices(ch_true, N, M, cp_len)
    diag = np.einsum("nmm->nm", G)
    err_var = ch_true.err_var

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    y_e_clean = demodulate(apply_channel(modulate(x_e, cp_len), ch_true, N, M), N, M, cp_len)

    stats, ici, pe, leak = [], np.zeros((N, M)), np.zeros((N, M)), np.zeros((N, M))
    for count in cfg.batch_sizes():
        z = _cn(rng, (count, N, M), 1.0)
        x_d = z * a_d
        y_d = demodulate(apply_channel(modulate(x_d, cp_len), ch_true, N, M), N, M, cp_len)
        e = _cn(rng, (count, N, M), err_var)
        y_e = y_e_clean + e * x_e
        ici_d = y_d - diag * x_d
        y_d = y_d + e * x_d
        ici += np.sum(np.abs(ici_d) ** 2, axis=0)
        pe += np.sum(np.abs(y_e) ** 2, axis=0)
        leak += np.sum(np.abs(e * x_d) ** 2, axis=0)
        stats.append(
            np.stack(
                [
                    0.5 * np.sum(np.abs(y_d) ** 2, axis=(-2, -1)),
                    0.5 * np.sum(np.abs(y_e) ** 2, axis=(-2, -1)),
                    0.375 * np.sum(ehmodel.quad_sum(y_d), axis=-1),
                    0.375 * np.sum(ehmodel.quad_sum(y_e), axis=-1),
                ]
            )
        )
    s = np.concatenate(stats, axis=1)
    T = cfg.trials
    ici, pe, leak = ici / T, pe / T, leak / T
    psi = dict(zip(("psi_yd2", "psi_ye2", "psi_yd4", "psi_ye4"), (_estimate(r) for r in s)))
    terms = ehmodel.PsiTerms(*(psi[k].mean for k in ("psi_yd2", "psi_ye2", "psi_yd4", "psi_ye4")))
    i_out = ehmodel.i_out(terms, min(v.rho, 1.0), params.circuit)

    rb = min(v.rho_bar, 1.0)
    useful = rb * np.abs(diag) ** 2 * a_d**2
    interf = rb * ici + params.lam * rb * pe + rb * leak + params.p_noise
    per_slot = np.sum(np.log2(1.0 + useful / interf), axis=1)
    return OfdmEvaluation(
        i_out=float(i_out),
        rate=Estimate(float(np.mean(per_slot)), 0.0),
        psi=psi,
        signal_power=np.abs(diag) ** 2 * a_d**2,
        ici_power=ici,
        energy_power=pe,
    )
