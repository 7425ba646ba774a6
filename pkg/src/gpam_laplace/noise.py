"""Mollified spatial white noise on T^2 and the Wick constant c_delta.

Unit white noise has coefficients xi_0 ~ N(0, 1) and, for k in the upper
half plane, xi_k = (a + i b) / sqrt(2) with a, b ~ N(0, 1) independent, so
that <xi, phi> ~ N(0, 1) for every real L^2-normalised trigonometric phi.
Mollification multiplies mode k by rhohat(delta |k|).

Each sample owns a Philox stream keyed by (seed, sample index).  Normals are
drawn in a fixed mode order (Chebyshev shells max(|kx|, |ky|) outward, then
lexicographic), so the low modes of a sample are the same on every grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import MollifierTooWide
from .torus import FOUR_PI2, TorusField, spectral

NYQUIST_TOL = 1e-3


@dataclass(frozen=True)
class MollifierSpec:
    """Radial Fourier multiplier rhohat(delta |k|).

    sharp    : 1 for delta |k| <= 1/2, else 0
    gaussian : exp(-8 (delta |k|)^2)
    """

    shape: str
    delta: float

    def __post_init__(self):
        if self.shape not in ("sharp", "gaussian"):
            raise ValueError(f"unknown mollifier shape {self.shape!r}")
        if not self.delta > 0:
            raise ValueError("mollifier scale must be positive")

    def rhohat(self, k_abs: np.ndarray) -> np.ndarray:
        z = self.delta * np.asarray(k_abs, dtype=float)
        if self.shape == "sharp":
            return (z <= 0.5 + 1e-12).astype(float)
        return np.exp(-8.0 * z * z)

    def nyquist_value(self, n: int) -> float:
        return float(self.rhohat(np.array(n / 2.0)))

    def check_resolved(self, n: int) -> None:
        v = self.nyquist_value(n)
        if v > NYQUIST_TOL:
            raise MollifierTooWide(
                f"{self.shape} mollifier at delta={self.delta:g} is {v:.3g} at the Nyquist shell of N={n}; "
                "use a finer grid or a larger delta"
            )

    def half_multiplier(self, n: int) -> np.ndarray:
        sp = spectral(n)
        return self.rhohat(np.sqrt(sp.k2)) * (sp.weights > 0)

    def to_dict(self) -> dict:
        return {"shape": self.shape, "delta": self.delta}


@dataclass(frozen=True)
class NoiseSample:
    field: TorusField
    seed: int
    index: int
    mollifier: MollifierSpec

    @property
    def delta(self) -> float:
        return self.mollifier.delta


@lru_cache(maxsize=None)
def _canonical_slots(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Half-spectrum (row, col) positions of the nonzero half-plane modes in draw order."""
    m = n // 2 - 1
    modes = [(kx, ky) for kx in range(-m, m + 1) for ky in range(0, m + 1) if ky > 0 or kx > 0]
    modes.sort(key=lambda k: (max(abs(k[0]), abs(k[1])), k[0], k[1]))
    kx = np.array([k[0] for k in modes])
    ky = np.array([k[1] for k in modes])
    return kx % n, ky


def white_noise_half(seed: int, indices, n: int) -> np.ndarray:
    """Unmollified white-noise half spectra, shape (len(indices), N, N/2)."""
    rows, cols = _canonical_slots(n)
    count = len(rows)
    out = np.zeros((len(indices), n, n // 2), dtype=complex)
    mirror = (-np.arange(n)) % n
    for b, i in enumerate(indices):
        gen = np.random.Generator(np.random.Philox(key=np.array([seed, i], dtype=np.uint64)))
        z = gen.standard_normal(1 + 2 * count)
        out[b, 0, 0] = z[0]
        out[b, rows, cols] = (z[1::2] + 1j * z[2::2]) / np.sqrt(2.0)
        # ky = 0 row: conjugate partners of kx > 0
        pos = np.arange(1, n // 2)
        out[b, mirror[pos], 0] = np.conj(out[b, pos, 0])
    return out


def noise_half(seed: int, indices, n: int, mollifier: MollifierSpec) -> np.ndarray:
    mollifier.check_resolved(n)
    return white_noise_half(seed, indices, n) * mollifier.half_multiplier(n)


def sample_noise(seed: int, delta: float, mollifier: str | MollifierSpec, n: int, index: int = 0) -> NoiseSample:
    spec = mollifier if isinstance(mollifier, MollifierSpec) else MollifierSpec(mollifier, delta)
    if spec.delta != delta:
        raise ValueError("mollifier scale disagrees with delta")
    half = noise_half(seed, [index], n, spec)[0]
    return NoiseSample(TorusField.from_half(half), seed, index, spec)


def renorm_constant(delta: float, mollifier: str | MollifierSpec, n: int) -> float:
    """c_delta = sum over retained k != 0 of rhohat(delta |k|)^2 / (4 pi^2 |k|^2)."""
    spec = mollifier if isinstance(mollifier, MollifierSpec) else MollifierSpec(mollifier, delta)
    spec.check_resolved(n)
    k = np.fft.fftfreq(n, 1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    keep = (np.abs(k)[:, None] < n // 2) & (np.abs(k)[None, :] < n // 2) & (k2 > 0)
    rho = spec.rhohat(np.sqrt(k2[keep]))
    # sum small terms first for bit-stable accumulation
    terms = np.sort(rho**2 / (FOUR_PI2 * k2[keep]))
    return float(np.sum(terms))


def wick_product_mc(seed: int, n_samples: int, spec: MollifierSpec, n: int, batch: int = 256) -> tuple[float, float]:
    """Monte-Carlo mean and stderr of the grid average of ((-Delta)^{-1} xi) * xi."""
    sp = spectral(n)
    inv = np.zeros(sp.half_shape)
    nz = sp.k2 > 0
    inv[nz] = 1.0 / (FOUR_PI2 * sp.k2[nz])
    vals = []
    for start in range(0, n_samples, batch):
        idx = range(start, min(start + batch, n_samples))
        xi = noise_half(seed, idx, n, spec)
        vals.append(sp.pair(xi * inv, xi))
    v = np.concatenate(vals)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))
