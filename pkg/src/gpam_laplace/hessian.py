"""Truncated-basis matrices of the second-order Hessian forms at a minimiser.

For basis directions e_i, e_j:

    A[i, j]      = DF[v_ij] + D^2F[v_i, v_j]     (v_ij full second variation)
    Atilde[i, j] = DF[v_ij^wn]                   (white-noise driven part only)
    q            = A - Atilde

The default assembly runs one adjoint solve and M first-variation marches;
every second variation then enters only through its pairing with the
adjoint state, which reduces the pair loop to Gram contractions.  The
per-pair forward solves remain available as ``method="direct"``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BasisTooLarge, NotSymmetric
from .observables import Observable
from .solver import Linearization, SolverConfig
from .torus import TimePath, TorusField, spectral


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


def basis_modes(n: int) -> list[tuple[int, int, str]]:
    """(kx, ky, kind) of the real orthonormal trigonometric basis, in order."""
    m = n // 2 - 1
    ks = [(kx, ky) for kx in range(-m, m + 1) for ky in range(0, m + 1) if ky > 0 or kx > 0]
    ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k[0], k[1]))
    out = [(0, 0, "const")]
    for kx, ky in ks:
        out.append((kx, ky, "cos"))
        out.append((kx, ky, "sin"))
    return out


def basis_half(size: int, n: int) -> np.ndarray:
    """Half spectra (size, N, N/2) of 1, sqrt2 cos(2 pi k.x), sqrt2 sin(2 pi k.x), ..."""
    modes = basis_modes(n)
    if size > len(modes):
        raise BasisTooLarge(f"basis size {size} exceeds the {len(modes)} real modes of an {n}-grid")
    out = np.zeros((size, n, n // 2), dtype=complex)
    r = math.sqrt(2.0) / 2.0
    for i, (kx, ky, kind) in enumerate(modes[:size]):
        if kind == "const":
            out[i, 0, 0] = 1.0
            continue
        c = r if kind == "cos" else -1j * r
        out[i, kx % n, ky] = c
        if ky == 0:
            out[i, -kx % n, 0] = np.conj(c)
    return out


def basis_field(i: int, n: int) -> TorusField:
    return TorusField.from_half(basis_half(i + 1, n)[i])


# ---------------------------------------------------------------------------
# symmetric eigensolver
# ---------------------------------------------------------------------------


def _check_symmetric(m: np.ndarray, tol: float = 1e-10) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 0.0)
    if m.size and np.max(np.abs(m - m.T)) > tol * scale:
        raise NotSymmetric(f"asymmetry {np.max(np.abs(m - m.T)):.3g} exceeds tolerance")


def eigen_sym(mtx: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi: ascending eigenvalues and orthonormal eigenvectors (columns)."""
    a = np.array(mtx, dtype=float)
    _check_symmetric(a)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return np.zeros(0), v
    norm = np.linalg.norm(a)
    target = tol * norm
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, np.sum(a * a) - np.sum(np.diag(a) ** 2)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    lam = np.diag(a).copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], v[:, order]


def offdiag_mass(mtx: np.ndarray) -> float:
    return float(np.linalg.norm(mtx - np.diag(np.diag(mtx))))


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------


@dataclass
class HessianBundle:
    size: int
    A: np.ndarray
    Atilde: np.ndarray
    q: np.ndarray
    eig_A: np.ndarray
    trace_q: float
    trace_Atilde: float
    hs_norm_A: float
    hs_norm_tail_estimate: float
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_matrices(cls, A: np.ndarray, Atilde: np.ndarray, meta: dict | None = None) -> HessianBundle:
        for name, m in (("A", A), ("Atilde", Atilde)):
            _check_symmetric(m)
        A = 0.5 * (A + A.T)
        Atilde = 0.5 * (Atilde + Atilde.T)
        q = A - Atilde
        eig, _ = eigen_sym(A)
        size = A.shape[0]
        half = size // 2
        hs = float(np.linalg.norm(A))
        tail = math.sqrt(max(0.0, hs**2 - float(np.linalg.norm(A[:half, :half])) ** 2))
        return cls(size, A, Atilde, q, eig, float(np.sum(np.diag(q))), float(np.sum(np.diag(Atilde))),
                   hs, tail, dict(meta or {}))

    def truncate(self, size: int) -> HessianBundle:
        """Bundle on the first ``size`` basis functions (bases are nested)."""
        if size > self.size:
            raise BasisTooLarge(f"cannot truncate a size-{self.size} bundle to {size}")
        return HessianBundle.from_matrices(self.A[:size, :size], self.Atilde[:size, :size],
                                           {**self.meta, "size": size})

    def header(self) -> dict:
        return {
            "size": self.size,
            "eig_A": [float(x) for x in self.eig_A],
            "trace_q": self.trace_q,
            "trace_Atilde": self.trace_Atilde,
            "hs_norm_A": self.hs_norm_A,
            "hs_norm_tail_estimate": self.hs_norm_tail_estimate,
            "meta": self.meta,
        }

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(len(head).to_bytes(8, "little"))
        buf.write(head)
        for m in (self.A, self.Atilde):
            buf.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> HessianBundle:
        hl = int.from_bytes(data[:8], "little")
        head = json.loads(data[8 : 8 + hl])
        m = head["size"]
        off = 8 + hl
        mats = []
        for _ in range(2):
            mats.append(np.frombuffer(data, dtype="<f8", count=m * m, offset=off).reshape(m, m).copy())
            off += 8 * m * m
        return cls.from_matrices(mats[0], mats[1], head.get("meta"))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> HessianBundle:
        return cls.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _riesz_half(F: Observable, w: TimePath) -> np.ndarray:
    return np.array([m.half for m in F.d1_riesz_kernel(w)])


def assemble(h: TorusField, w: TimePath, F: Observable, cfg: SolverConfig, size: int,
             method: str = "adjoint", workers: int = 1) -> HessianBundle:
    """A, Atilde on the first ``size`` basis functions at the base point (h, w)."""
    sp = spectral(cfg.n)
    E = basis_half(size, cfg.n)
    lin = Linearization.at(w, h, cfg)
    V = lin.first_variation(E)
    s_w = F.pairing(w)
    s = F.pairing_half(V, w.t_grid)
    d2 = float(F.profile.d2f(s_w)) * np.outer(s, s)
    if method == "adjoint":
        q_adj, _ = lin.adjoint(_riesz_half(F, w))
        Vp = sp.to_phys(V[:, :-1])
        cells = sp.p * sp.p
        flat = Vp.reshape(size, -1)
        cm = (Vp * (q_adj * lin.d2g_h)).reshape(size, -1) @ flat.T / cells
        W = np.einsum("inxy,nxy->ixy", Vp, q_adj * lin.dg)
        B = W.reshape(size, -1) @ sp.to_phys(E).reshape(size, -1).T / cells
        wn = B + B.T
        cm = 0.5 * (cm + cm.T)
    elif method == "direct":
        cm, wn = _direct_pairs(lin, F, w, V, E, workers)
    else:
        raise ValueError(f"unknown assembly method {method!r}")
    A = cm + wn + d2
    meta = {"method": method, "n": cfg.n, "steps": cfg.steps, "T": cfg.T}
    return HessianBundle.from_matrices(A, wn, meta)


def _direct_pairs(lin: Linearization, F: Observable, w: TimePath, V: np.ndarray, E: np.ndarray,
                  workers: int) -> tuple[np.ndarray, np.ndarray]:
    size = E.shape[0]
    slope = float(F.profile.df(F.pairing(w)))
    pairs = [(i, j) for i in range(size) for j in range(i, size)]

    def one(ij):
        i, j = ij
        vcm = lin.second_variation(V[i], V[j], E[i], E[j], "cm")
        vwn = lin.second_variation(V[i], V[j], E[i], E[j], "wn")
        return (slope * F.pairing_half(vcm, w.t_grid), slope * F.pairing_half(vwn, w.t_grid))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            vals = list(ex.map(one, pairs))
    else:
        vals = [one(p) for p in pairs]
    cm = np.zeros((size, size))
    wn = np.zeros((size, size))
    for (i, j), (a, b) in zip(pairs, vals):
        cm[i, j] = cm[j, i] = a
        wn[i, j] = wn[j, i] = b
    return cm, wn


def bilinear_entry(h: TorusField, w: TimePath, F: Observable, cfg: SolverConfig,
                   k: TorusField, l: TorusField) -> tuple[float, float]:
    """(A[k, l], Atilde[k, l]) for arbitrary directions via fresh forward solves."""
    lin = Linearization.at(w, h, cfg)
    kh, lh = k.half, l.half
    vk = lin.first_variation(kh)
    vl = lin.first_variation(lh)
    both = lin.second_variation(vk, vl, kh, lh, "both")
    wn = lin.second_variation(vk, vl, kh, lh, "wn")
    s_w = F.pairing(w)
    slope = float(F.profile.df(s_w))
    t = w.t_grid
    A = slope * F.pairing_half(both, t) + float(F.profile.d2f(s_w)) * F.pairing_half(vk, t) * F.pairing_half(vl, t)
    return float(A), float(slope * F.pairing_half(wn, t))


@dataclass
class TailReport:
    sizes: list[int]
    hs_norm_A: list[float]
    trace_q: list[float]
    trace_Atilde: list[float]
    abs_diag_q: list[float]
    abs_diag_Atilde: list[float]

    def relative_change(self, key: str) -> float:
        vals = getattr(self, key)
        ref = abs(vals[-1])
        return abs(vals[-1] - vals[-2]) / ref if ref > 0 else abs(vals[-1] - vals[-2])

    def atilde_monotone(self) -> bool:
        d = np.diff(self.abs_diag_Atilde)
        return bool(np.all(d >= 0))

    def as_dict(self) -> dict:
        return self.__dict__.copy()


def hs_tail_study(bundles: list[HessianBundle]) -> TailReport:
    """Convergence of HS norm and traces over a nested sequence of bundles."""
    bundles = sorted(bundles, key=lambda b: b.size)
    return TailReport(
        [b.size for b in bundles],
        [b.hs_norm_A for b in bundles],
        [b.trace_q for b in bundles],
        [b.trace_Atilde for b in bundles],
        [float(np.sum(np.abs(np.diag(b.q)))) for b in bundles],
        [float(np.sum(np.abs(np.diag(b.Atilde)))) for b in bundles],
    )
