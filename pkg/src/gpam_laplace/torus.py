"""Real scalar fields on the unit torus [0,1)^2 in Fourier representation.

Conventions: basis e_k(x) = exp(2 pi i k.x), Laplacian eigenvalue
-4 pi^2 |k|^2, white-noise pairing normalised on [0,1)^2.  Fields carry
Hermitian-symmetric coefficients on an N x N mode grid in numpy FFT order;
the Nyquist lines (k_x = N/2 or k_y = N/2) are always zero.

Two representations are used:

* ``TorusField.modes``: full (N, N) complex array, the public value.
* half spectra: ``modes[..., :, :N//2]``, used by the time steppers.
  Products are evaluated on a 3N/2 padded grid (2/3-rule), which is exact
  on every retained mode.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

FOUR_PI2 = 4.0 * np.pi**2
MAGIC = b"TF2D"


class GridMismatch(ValueError):
    """Two fields (or a field and a path) live on different mode grids."""


# ---------------------------------------------------------------------------
# spectral kernel (half spectra, batched over leading axes)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectral:
    """Precomputed index maps and multipliers for an N x N mode grid."""

    n: int
    p: int
    kx: np.ndarray  # (N, N//2) integer wavenumbers of the half spectrum
    ky: np.ndarray
    k2: np.ndarray
    weights: np.ndarray  # Parseval weights of the half spectrum
    src_rows: np.ndarray
    dst_rows: np.ndarray

    @property
    def half_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2)

    def heat(self, t: float) -> np.ndarray:
        return np.exp(-FOUR_PI2 * self.k2 * t)

    def phi1(self, dt: float) -> np.ndarray:
        """dt * (1 - exp(-lam dt)) / (lam dt), the exact integral of the semigroup."""
        lam = FOUR_PI2 * self.k2
        out = np.full(lam.shape, dt)
        nz = lam > 0
        out[nz] = -np.expm1(-lam[nz] * dt) / lam[nz]
        return out

    def to_phys(self, half: np.ndarray) -> np.ndarray:
        """Values on the padded P x P grid of (batched) half spectra."""
        lead = half.shape[:-2]
        pad = np.zeros(lead + (self.p, self.p // 2 + 1), dtype=complex)
        pad[..., self.dst_rows, : self.n // 2] = half[..., self.src_rows, :]
        return np.fft.irfft2(pad, s=(self.p, self.p), norm="forward")

    def from_phys(self, values: np.ndarray) -> np.ndarray:
        """Truncated half spectrum of padded-grid values (drops Nyquist lines)."""
        spec = np.fft.rfft2(values, norm="forward")
        out = np.zeros(values.shape[:-2] + self.half_shape, dtype=complex)
        out[..., self.src_rows, :] = spec[..., self.dst_rows, : self.n // 2]
        return out

    def pair(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Real L^2 pairing of half spectra, contracted over the last two axes."""
        return np.einsum("...ij,ij->...", (a * np.conj(b)).real, self.weights)

    def pair_phys(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """L^2 pairing from padded-grid values (exact for the truncated fields)."""
        return np.mean(a * b, axis=(-2, -1))


@lru_cache(maxsize=None)
def spectral(n: int) -> Spectral:
    if n % 2 or n < 8:
        raise ValueError(f"grid size must be even and >= 8, got {n}")
    p = 3 * n // 2
    f = np.fft.fftfreq(n, 1.0 / n).astype(int)
    kx, ky = np.meshgrid(f, np.arange(n // 2), indexing="ij")
    keep = np.abs(f) < n // 2
    src_rows = np.nonzero(keep)[0]
    dst_rows = f[keep] % p
    weights = np.where(ky == 0, 1.0, 2.0)
    weights[np.abs(kx) == n // 2] = 0.0
    return Spectral(n, p, kx, ky, (kx**2 + ky**2).astype(float), weights, src_rows, dst_rows)


def full_from_half(half: np.ndarray) -> np.ndarray:
    """Hermitian extension of half spectra to full (N, N) coefficient arrays."""
    n = half.shape[-2]
    full = np.zeros(half.shape[:-2] + (n, n), dtype=complex)
    full[..., : n // 2] = half
    neg = (-np.arange(n)) % n
    full[..., n // 2 + 1 :] = np.conj(half[..., neg, :0:-1])
    full[..., n // 2, :] = 0.0
    full[..., :, n // 2] = 0.0
    return full


def hermitize(modes: np.ndarray) -> np.ndarray:
    """Project onto real fields with vanishing Nyquist lines."""
    n = modes.shape[-1]
    neg = (-np.arange(n)) % n
    sym = 0.5 * (modes + np.conj(modes[..., neg, :][..., :, neg]))
    sym[..., n // 2, :] = 0.0
    sym[..., :, n // 2] = 0.0
    return sym


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TorusField:
    """Real field on T^2 given by its Fourier coefficients (numpy FFT order)."""

    modes: np.ndarray

    def __post_init__(self):
        m = np.array(self.modes, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise GridMismatch(f"modes must be a square array, got {m.shape}")
        spectral(m.shape[0])
        m = hermitize(m)
        m.setflags(write=False)
        object.__setattr__(self, "modes", m)

    # -- constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, n: int) -> TorusField:
        return cls(np.zeros((n, n), dtype=complex))

    @classmethod
    def constant(cls, c: float, n: int) -> TorusField:
        m = np.zeros((n, n), dtype=complex)
        m[0, 0] = c
        return cls(m)

    @classmethod
    def from_values(cls, values: np.ndarray) -> TorusField:
        return cls(np.fft.fft2(np.asarray(values, dtype=float), norm="forward"))

    @classmethod
    def from_half(cls, half: np.ndarray) -> TorusField:
        return cls(full_from_half(half))

    @classmethod
    def trig(cls, k: tuple[int, int], n: int, kind: str = "cos", amplitude: float = 1.0) -> TorusField:
        """amplitude * cos(2 pi k.x) or amplitude * sin(2 pi k.x)."""
        kx, ky = k
        if max(abs(kx), abs(ky)) >= n // 2:
            raise ValueError(f"mode {k} not representable on an {n}-grid")
        m = np.zeros((n, n), dtype=complex)
        if kx == 0 and ky == 0:
            m[0, 0] = amplitude if kind == "cos" else 0.0
            return cls(m)
        c = 0.5 * amplitude if kind == "cos" else -0.5j * amplitude
        m[kx % n, ky % n] += c
        m[-kx % n, -ky % n] += np.conj(c)
        return cls(m)

    # -- views --------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.modes.shape[0]

    @property
    def half(self) -> np.ndarray:
        return self.modes[:, : self.n // 2]

    @property
    def values(self) -> np.ndarray:
        return np.fft.ifft2(self.modes, norm="forward").real

    def hermitian_defect(self) -> float:
        n = self.n
        neg = (-np.arange(n)) % n
        return float(np.max(np.abs(self.modes - np.conj(self.modes[neg][:, neg]))))

    # -- arithmetic -----------------------------------------------------------
    def _check(self, other: TorusField):
        if other.n != self.n:
            raise GridMismatch(f"grid sizes differ: {self.n} vs {other.n}")

    def __add__(self, other: TorusField) -> TorusField:
        self._check(other)
        return TorusField(self.modes + other.modes)

    def __sub__(self, other: TorusField) -> TorusField:
        self._check(other)
        return TorusField(self.modes - other.modes)

    def __mul__(self, c: float) -> TorusField:
        return TorusField(self.modes * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> TorusField:
        return TorusField(-self.modes)

    def __repr__(self) -> str:
        return f"TorusField(N={self.n}, l2={sobolev_norm(self, 0.0):.6g})"


@dataclass(frozen=True, eq=False)
class TimePath:
    """Fields at uniform times 0 = t_0 < ... < t_M = T, stored as (M+1, N, N) modes."""

    modes: np.ndarray
    t_grid: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.modes, dtype=complex)
        t = np.asarray(self.t_grid, dtype=float)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise GridMismatch(f"path modes must be (M+1, N, N), got {m.shape}")
        if t.shape != (m.shape[0],):
            raise GridMismatch("t_grid length does not match number of steps")
        dt = np.diff(t)
        if len(t) > 1 and (np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-12, atol=0.0)):
            raise ValueError("t_grid must be strictly increasing and uniform")
        m = m.copy()
        m.setflags(write=False)
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "modes", m)
        object.__setattr__(self, "t_grid", t)

    @classmethod
    def from_half(cls, half: np.ndarray, t_grid: np.ndarray) -> TimePath:
        return cls(full_from_half(half), t_grid)

    @classmethod
    def zeros_like(cls, other: TimePath) -> TimePath:
        return cls(np.zeros_like(other.modes), other.t_grid)

    @property
    def n(self) -> int:
        return self.modes.shape[-1]

    @property
    def steps(self) -> list[TorusField]:
        return [TorusField(m) for m in self.modes]

    @property
    def half(self) -> np.ndarray:
        return self.modes[..., : self.n // 2]

    def __len__(self) -> int:
        return self.modes.shape[0]

    def __getitem__(self, i: int) -> TorusField:
        return TorusField(self.modes[i])

    def _check(self, other: TimePath):
        if other.modes.shape != self.modes.shape:
            raise GridMismatch(f"path shapes differ: {self.modes.shape} vs {other.modes.shape}")

    def __add__(self, other: TimePath) -> TimePath:
        self._check(other)
        return TimePath(self.modes + other.modes, self.t_grid)

    def __sub__(self, other: TimePath) -> TimePath:
        self._check(other)
        return TimePath(self.modes - other.modes, self.t_grid)

    def __mul__(self, c: float) -> TimePath:
        return TimePath(self.modes * float(c), self.t_grid)

    __rmul__ = __mul__

    def sup_l2(self) -> float:
        return float(np.max(np.sqrt(np.sum(np.abs(self.modes) ** 2, axis=(-2, -1)))))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def heat_propagate(f: TorusField, t: float) -> TorusField:
    """Apply the heat semigroup exp(t Delta)."""
    if t < 0:
        raise ValueError(f"heat flow needs t >= 0, got {t}")
    n = f.n
    k = np.fft.fftfreq(n, 1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    return TorusField(f.modes * np.exp(-FOUR_PI2 * k2 * t))


def multiply(f: TorusField, g: TorusField) -> TorusField:
    """Dealiased product: pointwise on the 3N/2 grid, truncated back to N."""
    f._check(g)
    sp = spectral(f.n)
    return TorusField.from_half(sp.from_phys(sp.to_phys(f.half) * sp.to_phys(g.half)))


def inner_l2(f: TorusField, g: TorusField) -> float:
    f._check(g)
    return float(np.sum(f.modes * np.conj(g.modes)).real)


def sobolev_norm(f: TorusField, s: float) -> float:
    n = f.n
    k = np.fft.fftfreq(n, 1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    return float(np.sqrt(np.sum((1.0 + FOUR_PI2 * k2) ** s * np.abs(f.modes) ** 2)))


def dyadic_block(k_abs: np.ndarray) -> np.ndarray:
    """Block index: 0 for k = 0, j >= 1 for 2^(j-1) <= |k| < 2^j."""
    out = np.zeros(k_abs.shape, dtype=int)
    nz = k_abs > 0
    out[nz] = np.floor(np.log2(k_abs[nz])).astype(int) + 1
    return out


def holder_norm_surrogate(f: TorusField, alpha: float) -> float:
    """Littlewood-Paley surrogate max_j 2^(j alpha) ||Delta_j f||_inf for C^alpha."""
    n = f.n
    k = np.fft.fftfreq(n, 1.0 / n)
    blocks = dyadic_block(np.sqrt(k[:, None] ** 2 + k[None, :] ** 2))
    best = 0.0
    for j in np.unique(blocks):
        part = np.where(blocks == j, f.modes, 0.0)
        sup = np.max(np.abs(np.fft.ifft2(part, norm="forward").real))
        best = max(best, 2.0 ** (j * alpha) * sup)
    return float(best)


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def _centered_order(n: int) -> np.ndarray:
    """Row indices (FFT order) for k = -N/2+1, ..., N/2."""
    return np.arange(-n // 2 + 1, n // 2 + 1) % n


def field_to_bytes(f: TorusField) -> bytes:
    idx = _centered_order(f.n)
    m = f.modes[idx][:, idx]
    body = np.empty(m.shape + (2,), dtype="<f8")
    body[..., 0] = m.real
    body[..., 1] = m.imag
    # 16-byte header: magic, N, two reserved words
    return MAGIC + struct.pack("<III", f.n, 0, 0) + body.tobytes()


def field_from_bytes(buf: bytes, offset: int = 0) -> tuple[TorusField, int]:
    """Decode one record starting at ``offset``; returns (field, next offset)."""
    if buf[offset : offset + 4] != MAGIC:
        raise ValueError("bad magic, not a TF2D record")
    n, _ = struct.unpack_from("<II", buf, offset + 4)
    size = n * n * 16
    body = np.frombuffer(buf, dtype="<f8", count=2 * n * n, offset=offset + 16).reshape(n, n, 2)
    centered = body[..., 0] + 1j * body[..., 1]
    m = np.zeros((n, n), dtype=complex)
    idx = _centered_order(n)
    m[np.ix_(idx, idx)] = centered
    return TorusField(m), offset + 16 + size


def save_field(f: TorusField, path: str | Path) -> None:
    Path(path).write_bytes(field_to_bytes(f))


def load_field(path: str | Path) -> TorusField:
    return field_from_bytes(Path(path).read_bytes())[0]


def save_path(path_obj: TimePath, path: str | Path) -> None:
    with open(path, "wb") as fh:
        for step in path_obj.steps:
            fh.write(field_to_bytes(step))


def load_path(path: str | Path, t_grid: np.ndarray) -> TimePath:
    buf = Path(path).read_bytes()
    fields, off = [], 0
    while off < len(buf):
        f, off = field_from_bytes(buf, off)
        fields.append(f.modes)
    return TimePath(np.array(fields), t_grid)


def field_to_json(f: TorusField) -> str:
    """Debug dump: {"N": n, "modes": {"kx,ky": [re, im]}} for nonzero modes."""
    n = f.n
    k = np.fft.fftfreq(n, 1.0 / n).astype(int)
    modes = {}
    for i, j in zip(*np.nonzero(f.modes)):
        c = f.modes[i, j]
        modes[f"{k[i]},{k[j]}"] = [float(c.real), float(c.imag)]
    return json.dumps({"N": n, "modes": modes}, indent=1)


def field_from_json(text: str) -> TorusField:
    d = json.loads(text)
    n = d["N"]
    m = np.zeros((n, n), dtype=complex)
    for key, (re, im) in d["modes"].items():
        kx, ky = (int(s) for s in key.split(","))
        m[kx % n, ky % n] = re + 1j * im
    return TorusField(m)
