"""Delay-Doppler / time-frequency lattices and the unitary ISFFT/SFFT pair.

Indexing convention: the first axis is Doppler index ``k`` (DD domain) or
time slot ``n`` (TF domain), both of length N. The second axis is delay
index ``l`` (DD) or subcarrier ``m`` (TF), both of length M.

    X[n, m] = 1/sqrt(NM) sum_k sum_l x[k, l] exp(j2pi(nk/N - ml/M))

i.e. an inverse DFT along the Doppler axis and a forward DFT along the delay
axis, both unitary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridDims:
    n_slots: int
    m_subcarriers: int

    def __post_init__(self):
        if self.n_slots < 1 or self.m_subcarriers < 1:
            raise ValueError(f"grid dims must be >= 1, got {self.n_slots}x{self.m_subcarriers}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_slots, self.m_subcarriers)

    @property
    def size(self) -> int:
        return self.n_slots * self.m_subcarriers


def _as_grid(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("grid has non-finite entries")
    return a


def isfft(dd) -> np.ndarray:
    """Map a delay-Doppler grid x[k, l] to the time-frequency grid X[n, m]."""
    x = _as_grid(dd)
    # ifft along k carries 1/N; fft along l carries no scale
    return np.fft.fft(np.fft.ifft(x, axis=0, norm="ortho"), axis=1, norm="ortho")


def sfft(tf) -> np.ndarray:
    """Inverse of :func:`isfft`: time-frequency X[n, m] to delay-Doppler x[k, l]."""
    X = _as_grid(tf)
    return np.fft.ifft(np.fft.fft(X, axis=0, norm="ortho"), axis=1, norm="ortho")


def isfft_direct(dd) -> np.ndarray:
    """Literal double-sum evaluation of the ISFFT, O(N^2 M^2)."""
    x = _as_grid(dd)
    N, M = x.shape
    n = np.arange(N)
    m = np.arange(M)
    # doppler kernel [n, k] and delay kernel [m, l]
    Wn = np.exp(2j * np.pi * np.outer(n, n) / N)
    Wm = np.exp(-2j * np.pi * np.outer(m, m) / M)
    return Wn @ x @ Wm.T / np.sqrt(N * M)


def sfft_direct(tf) -> np.ndarray:
    X = _as_grid(tf)
    N, M = X.shape
    n = np.arange(N)
    m = np.arange(M)
    Wn = np.exp(-2j * np.pi * np.outer(n, n) / N)
    Wm = np.exp(2j * np.pi * np.outer(m, m) / M)
    return Wn @ X @ Wm.T / np.sqrt(N * M)


def grid_to_json(values) -> dict:
    """Row-major list of ``[re, im]`` pairs with explicit dims."""
    a = _as_grid(values)
    return {
        "n_slots": a.shape[0],
        "m_subcarriers": a.shape[1],
        "values": [[float(v.real), float(v.imag)] for v in a.ravel()],
    }


def grid_from_json(obj) -> np.ndarray:
    if isinstance(obj, str):
        obj = json.loads(obj)
    N, M = int(obj["n_slots"]), int(obj["m_subcarriers"])
    flat = np.asarray(obj["values"], dtype=float)
    if flat.shape != (N * M, 2):
        raise ValueError(f"expected {N * M} [re, im] pairs, got shape {flat.shape}")
    return (flat[:, 0] + 1j * flat[:, 1]).reshape(N, M)
