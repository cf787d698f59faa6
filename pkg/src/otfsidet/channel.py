"""Sparse delay-Doppler channels with integer taps and imperfect estimates."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grids import GridDims

SPEED_OF_LIGHT = 2.998e8


@dataclass(frozen=True)
class Path:
    gain_est: complex
    delay_tap: int
    doppler_tap: int


@dataclass(frozen=True)
class DDChannel:
    """P-path channel; ``err_var`` is the per-element TF-domain error variance."""

    paths: tuple[Path, ...]
    err_var: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("channel needs at least one path")
        if self.paths[0].delay_tap != 0:
            raise ValueError("path 0 must sit at delay tap 0")
        if self.err_var < 0:
            raise ValueError("err_var must be >= 0")

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain_est for p in self.paths], dtype=np.complex128)

    @property
    def delay_taps(self) -> np.ndarray:
        return np.array([p.delay_tap for p in self.paths], dtype=int)

    @property
    def doppler_taps(self) -> np.ndarray:
        return np.array([p.doppler_tap for p in self.paths], dtype=int)

    def scaled(self, amplitude: float) -> "DDChannel":
        """Multiply every gain by ``amplitude`` and the error variance by its square."""
        paths = tuple(Path(p.gain_est * amplitude, p.delay_tap, p.doppler_tap) for p in self.paths)
        return DDChannel(paths, self.err_var * amplitude**2, self.seed)

    def with_err_var(self, err_var: float) -> "DDChannel":
        return DDChannel(self.paths, err_var, self.seed)

    def to_json(self) -> dict:
        return {
            "paths": [
                {
                    "gain_est": [float(np.real(p.gain_est)), float(np.imag(p.gain_est))],
                    "delay_tap": int(p.delay_tap),
                    "doppler_tap": int(p.doppler_tap),
                }
                for p in self.paths
            ],
            "err_var": float(self.err_var),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj) -> "DDChannel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        paths = tuple(
            Path(complex(*p["gain_est"]), int(p["delay_tap"]), int(p["doppler_tap"]))
            for p in obj["paths"]
        )
        return cls(paths, float(obj["err_var"]), obj.get("seed"))


@dataclass(frozen=True)
class TFChannel:
    h_est: np.ndarray = field(repr=False)
    err_var: float = 0.0

    def __post_init__(self):
        if self.err_var < 0:
            raise ValueError("err_var must be >= 0")

    @property
    def dims(self) -> GridDims:
        return GridDims(*self.h_est.shape)

    @property
    def hmag(self) -> np.ndarray:
        return np.abs(self.h_est)

    @property
    def err_std(self) -> float:
        return float(np.sqrt(self.err_var))


def doppler_index_bound(fc: float, v_max: float, n_slots: int, df: float) -> int:
    """Largest integer Doppler tap, ``round(fc * v * N / (c * df))``."""
    return int(round(fc * v_max * n_slots / (SPEED_OF_LIGHT * df)))


def delay_index_bound(tau_max: float, m_subcarriers: int, df: float) -> int:
    return int(round(tau_max * m_subcarriers * df))


def uniform_profile(p_paths: int) -> np.ndarray:
    return np.full(p_paths, 1.0 / p_paths)


def sample_dd_channel(
    rng: np.random.Generator,
    p_paths: int,
    l_max: int,
    k_max: int,
    err_var: float = 0.0,
    profile: Callable[[int], np.ndarray] = uniform_profile,
    seed: Optional[int] = None,
) -> DDChannel:
    """Draw a channel: path 0 at delay 0, other delays distinct in ``1..l_max``.

    Draw order is delays, gains, then Doppler taps, so two calls with equal
    seeds and equal ``(p_paths, l_max)`` share delays and gains even when
    ``k_max`` differs. Comparisons across speeds rely on this.
    """
    if p_paths < 1:
        raise ValueError("p_paths must be >= 1")
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if p_paths > l_max + 1:
        raise ValueError(f"{p_paths} paths need distinct delays but only {l_max} nonzero taps exist")

    delays = np.concatenate([[0], rng.choice(np.arange(1, l_max + 1), size=p_paths - 1, replace=False)])
    var = np.asarray(profile(p_paths), dtype=float)
    gains = np.sqrt(var / 2) * (rng.standard_normal(p_paths) + 1j * rng.standard_normal(p_paths))
    dopplers = rng.integers(-k_max, k_max + 1, size=p_paths)
    paths = tuple(Path(complex(g), int(d), int(k)) for g, d, k in zip(gains, delays, dopplers))
    return DDChannel(paths, err_var, seed)


def tf_from_dd(ch: DDChannel, dims: GridDims) -> TFChannel:
    """H[n, m] = sum_i h_i exp(j2pi(n k_i / N - m l_i / M))."""
    N, M = dims.shape
    n = np.arange(N)[:, None, None]
    m = np.arange(M)[None, :, None]
    phase = n * ch.doppler_taps[None, None, :] / N - m * ch.delay_taps[None, None, :] / M
    H = np.sum(ch.gains[None, None, :] * np.exp(2j * np.pi * phase), axis=-1)
    return TFChannel(H, ch.err_var)


def sample_tf_error(rng: np.random.Generator, dims: GridDims | Sequence[int], err_var: float) -> np.ndarray:
    """i.i.d. CN(0, err_var) grid."""
    if err_var < 0:
        raise ValueError("err_var must be >= 0")
    shape = dims.shape if isinstance(dims, GridDims) else tuple(dims)
    if err_var == 0:
        return np.zeros(shape, dtype=np.complex128)
    s = np.sqrt(err_var / 2)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
