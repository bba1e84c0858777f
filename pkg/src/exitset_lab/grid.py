"""Flat periodic torus [0, L)^n with Fourier-spectral calculus.

Fields are plain float64 arrays of shape ``(N,) * n`` in C order; the
grid object supplies every operation that needs spacing or wavenumbers.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

_HEADER = struct.Struct("<qqd")
# FFT worker count; -1 uses every core
WORKERS = int(os.environ.get("EXITSET_LAB_THREADS", "-1"))


class Norms(NamedTuple):
    l2: float
    h1: float
    lcrit: float
    w_neg1: float


def critical_exponent(n: int) -> float:
    """Sobolev-critical exponent 2n/(n-2)."""
    return 2.0 * n / (n - 2)


def conformal_constant(n: int) -> float:
    return 4.0 * (n - 1) / (n - 2)


def torus_distance(a, b, L: float) -> float:
    """Minimum-image Euclidean distance between two points of [0, L)^n."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % L
    d = np.minimum(d, L - d)
    return float(np.sqrt(np.sum(d * d)))


@dataclass(frozen=True)
class TorusGrid:
    n: int
    N: int
    L: float = 2.0 * np.pi

    def __post_init__(self):
        if not 3 <= self.n <= 5:
            raise ValueError(f"dimension must be 3..5, got {self.n}")
        if self.N < 4 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 4, got {self.N}")
        if not self.L > 0:
            raise ValueError("L must be positive")
        # invertibility of the conformal Laplacian on the torus
        gap = np.min(np.abs(self.cn * self.k2 - 1.0))
        if gap < 1e-10:
            raise ValueError("conformal Laplacian has a zero mode on this torus")

    # geometry -----------------------------------------------------------
    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def volume(self) -> float:
        return self.L**self.n

    @property
    def cn(self) -> float:
        return conformal_constant(self.n)

    @property
    def p(self) -> float:
        return critical_exponent(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def max_lambda(self) -> float:
        """Largest concentration the grid resolves (core width >= 2h)."""
        return 1.0 / (2.0 * self.h)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(self.N) * self.h

    def axis_view(self, values: np.ndarray, i: int) -> np.ndarray:
        shape = [1] * self.n
        shape[i] = values.shape[0]
        return values.reshape(shape)

    def displacement(self, a) -> list[np.ndarray]:
        """Per-axis signed minimum-image offsets x - a, broadcastable."""
        out = []
        for i, ai in enumerate(np.asarray(a, dtype=float)):
            d = (self.axis - ai + 0.5 * self.L) % self.L - 0.5 * self.L
            out.append(self.axis_view(d, i))
        return out

    def distance_to(self, a) -> np.ndarray:
        d2 = sum(d * d for d in self.displacement(a))
        return np.sqrt(np.broadcast_to(d2, self.shape))

    def distance(self, a, b) -> float:
        return torus_distance(a, b, self.L)

    def nearest_node(self, a) -> tuple[float, ...]:
        return tuple(float(x) for x in (np.round(np.asarray(a) / self.h) % self.N) * self.h)

    # spectral machinery -------------------------------------------------
    @cached_property
    def _freqs(self) -> list[np.ndarray]:
        full = 2.0 * np.pi * sfft.fftfreq(self.N, d=self.h)
        half = 2.0 * np.pi * sfft.rfftfreq(self.N, d=self.h)
        return [full] * (self.n - 1) + [half]

    @cached_property
    def k2(self) -> np.ndarray:
        out = 0.0
        for i, f in enumerate(self._freqs):
            out = out + self.axis_view(f * f, i)
        return np.ascontiguousarray(out)

    @cached_property
    def _rweights(self) -> np.ndarray:
        # rfft halves the last axis; interior modes stand for a conjugate pair
        w = np.full(self.N // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return self.axis_view(w, self.n - 1)

    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, workers=WORKERS)

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfftn(F, s=self.shape, workers=WORKERS)

    def spectral_inner(self, F: np.ndarray, G: np.ndarray, weight=None) -> float:
        """Integral of f*g from rfft coefficients, optionally with a multiplier."""
        prod = (F * np.conj(G)).real
        if weight is not None:
            prod = prod * weight
        return float(np.sum(prod * self._rweights)) * self.volume / float(self.N) ** (2 * self.n)

    # calculus -----------------------------------------------------------
    def integrate(self, f) -> float:
        return float(np.sum(f)) * self.h**self.n

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self.fft(f))

    def apply_L(self, f: np.ndarray) -> np.ndarray:
        """Conformal Laplacian -c_n * Laplacian - 1 of the model metric."""
        return self.ifft((self.cn * self.k2 - 1.0) * self.fft(f))

    def gradient(self, f: np.ndarray) -> list[np.ndarray]:
        F = self.fft(f)
        out = []
        for i, freq in enumerate(self._freqs):
            ik = 1j * freq.copy()
            if i < self.n - 1:
                ik[self.N // 2] = 0.0  # odd derivative drops the Nyquist mode
            else:
                ik[-1] = 0.0
            out.append(self.ifft(self.axis_view(ik, i) * F))
        return out

    def dirichlet(self, f: np.ndarray, g: np.ndarray | None = None) -> float:
        """Quadratic form of -Laplacian: integral of grad f . grad g."""
        F = self.fft(f)
        G = F if g is None else self.fft(g)
        return self.spectral_inner(F, G, self.k2)

    def l_inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Bilinear form of the conformal Laplacian."""
        F, G = self.fft(f), self.fft(g)
        return self.spectral_inner(F, G, self.cn * self.k2 - 1.0)

    def l2(self, f) -> float:
        return float(np.sqrt(self.integrate(f * f)))

    def h1(self, f) -> float:
        F = self.fft(f)
        return float(np.sqrt(self.spectral_inner(F, F, 1.0 + self.k2)))

    def h1_inner(self, f, g) -> float:
        return self.spectral_inner(self.fft(f), self.fft(g), 1.0 + self.k2)

    def lcrit(self, f) -> float:
        p = self.p
        return float(self.integrate(np.abs(f) ** p) ** (1.0 / p))

    def w_neg1(self, f) -> float:
        F = self.fft(f)
        return float(np.sqrt(self.spectral_inner(F, F, 1.0 / (1.0 + self.k2))))

    def norms(self, f) -> Norms:
        F = self.fft(f)
        h1 = self.spectral_inner(F, F, 1.0 + self.k2)
        wm = self.spectral_inner(F, F, 1.0 / (1.0 + self.k2))
        return Norms(self.l2(f), float(np.sqrt(h1)), self.lcrit(f), float(np.sqrt(wm)))

    def constant(self, c: float) -> np.ndarray:
        return np.full(self.shape, float(c))

    def check_field(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("field has non-finite values")
        return f


def save_field(path, grid: TorusGrid, f: np.ndarray) -> None:
    """Header (n, N as int64; L as float64), then N^n float64, all little-endian."""
    f = grid.check_field(f)
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(grid.n, grid.N, grid.L))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes(order="C"))


def load_field(path) -> tuple[TorusGrid, np.ndarray]:
    raw = Path(path).read_bytes()
    n, N, L = _HEADER.unpack_from(raw)
    grid = TorusGrid(int(n), int(N), float(L))
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != N**n:
        raise ValueError(f"expected {N**n} values, found {body.size}")
    return grid, body.reshape(grid.shape).astype(float)
