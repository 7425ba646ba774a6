"""Exponential-Euler steppers for deterministic gPAM and its variation equations.

Every equation here has the mild form

    u(t) = P_t u(0) + int_0^t P_{t-s} N(s) ds

and is advanced by

    u_{n+1} = E u_n + Phi N_n,   E = exp(dt Delta),   Phi = (1 - E) / (-Delta)

with the forcing N_n evaluated at the left node t_n.  Left-node evaluation
makes every variation equation the exact derivative of the discrete gPAM
march, and makes the diagonal (Ito-type) correction of noise products equal
the explicit mode sum used for the counterterm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import PicardDivergence
from .torus import TimePath, TorusField, spectral


@dataclass(frozen=True)
class GFunction:
    """Nonlinearity g with g', g'' and declared sup bounds (inf = unbounded)."""

    name: str
    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]
    d2g: Callable[[np.ndarray], np.ndarray]
    bounds: tuple[float, float, float]
    scale: float = 1.0

    def vanishes_at_zero(self, order: int = 2) -> bool:
        """True when g^(m)(0) = 0 for m = 0..order."""
        fns = (self.g, self.dg, self.d2g)[: order + 1]
        return all(abs(float(fn(np.zeros(1))[0])) < 1e-14 for fn in fns)

    @property
    def is_zero(self) -> bool:
        return self.name == "zero" or self.scale == 0.0


def make_g(name: str, scale: float = 1.0) -> GFunction:
    a = float(scale)
    if name == "zero":
        z = lambda x: np.zeros_like(x)  # noqa: E731
        return GFunction(name, z, z, z, (0.0, 0.0, 0.0), 0.0)
    if name == "constant":
        z = lambda x: np.zeros_like(x)  # noqa: E731
        return GFunction(name, lambda x: np.full_like(x, a), z, z, (abs(a), 0.0, 0.0), a)
    if name == "linear":
        return GFunction(
            name, lambda x: a * x, lambda x: np.full_like(x, a), lambda x: np.zeros_like(x),
            (math.inf, abs(a), 0.0), a,
        )
    if name == "sin":
        return GFunction(name, lambda x: a * np.sin(x), lambda x: a * np.cos(x), lambda x: -a * np.sin(x),
                         (abs(a),) * 3, a)
    if name == "sin3":
        def g(x):
            return a * np.sin(x) ** 3

        def dg(x):
            s = np.sin(x)
            return 3.0 * a * s * s * np.cos(x)

        def d2g(x):
            s = np.sin(x)
            return a * (6.0 * s - 9.0 * s**3)

        return GFunction(name, g, dg, d2g, (abs(a), 2.0 * abs(a) / math.sqrt(3.0), 3.0 * abs(a)), a)
    raise ValueError(f"unknown nonlinearity {name!r}")


@dataclass(frozen=True)
class SolverConfig:
    n: int
    T: float
    steps: int
    g: GFunction
    blowup: float = 1e6

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("time horizon must be positive")
        if self.steps < 4:
            raise ValueError("need at least 4 time steps")
        if self.blowup <= 0:
            raise ValueError("blow-up threshold must be positive")
        spectral(self.n)

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)


class Stepper:
    """Diagonal propagators for one (N, dt) pair."""

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.sp = spectral(cfg.n)
        self.E = self.sp.heat(cfg.dt)
        self.Phi = self.sp.phi1(cfg.dt)

    def step(self, u: np.ndarray, source_phys: np.ndarray) -> np.ndarray:
        return self.E * u + self.Phi * self.sp.from_phys(source_phys)


def _check_finite(u: np.ndarray, bound: float, what: str, n: int):
    top = np.max(np.abs(u)) if u.size else 0.0
    if not np.isfinite(top) or top > bound:
        raise PicardDivergence(f"{what} left the bounded regime at step {n} (max |coeff| = {top:.3g}); "
                               "shrink T or dt")


def _as_half(x: TorusField | np.ndarray, n: int) -> np.ndarray:
    if isinstance(x, TorusField):
        if x.n != n:
            raise ValueError(f"field grid {x.n} does not match solver grid {n}")
        return x.half
    return np.asarray(x)


def march_gpam(cfg: SolverConfig, zeta_half: np.ndarray, u0_half: np.ndarray) -> np.ndarray:
    """Half-spectrum path (M+1, N, N/2) of (d_t - Delta) w = g(w) zeta."""
    st = Stepper(cfg)
    sp = st.sp
    z = sp.to_phys(zeta_half)
    out = np.empty((cfg.steps + 1,) + sp.half_shape, dtype=complex)
    out[0] = u0_half
    for n in range(cfg.steps):
        out[n + 1] = st.step(out[n], cfg.g.g(sp.to_phys(out[n])) * z)
        _check_finite(out[n + 1], cfg.blowup, "gPAM solution", n + 1)
    return out


def solve_gpam(zeta: TorusField, u0: TorusField, cfg: SolverConfig) -> TimePath:
    """Deterministic gPAM (d_t - Delta) w = g(w) zeta, w(0) = u0."""
    path = march_gpam(cfg, _as_half(zeta, cfg.n), _as_half(u0, cfg.n))
    return TimePath.from_half(path, cfg.t_grid)


class Linearization:
    """g, g', g'' of a base path on the padded grid, frozen for linear marches."""

    def __init__(self, w_half: np.ndarray, h_half: np.ndarray, cfg: SolverConfig):
        self.cfg = cfg
        self.stepper = Stepper(cfg)
        sp = self.stepper.sp
        self.w_half = w_half
        self.h_half = h_half
        wp = sp.to_phys(w_half[:-1])
        self.h_phys = sp.to_phys(h_half)
        self.g = cfg.g.g(wp)
        self.dg = cfg.g.dg(wp)
        self.d2g = cfg.g.d2g(wp)
        self.dg_h = self.dg * self.h_phys
        self.d2g_h = self.d2g * self.h_phys

    @classmethod
    def at(cls, w: TimePath, h: TorusField, cfg: SolverConfig) -> Linearization:
        return cls(w.half, _as_half(h, cfg.n), cfg)

    @property
    def sp(self):
        return self.stepper.sp

    def march(self, source: Callable[[int, np.ndarray], np.ndarray], batch: tuple = (),
              store: bool = True, what: str = "linear solution") -> np.ndarray:
        """March v_{n+1} = E v_n + Phi T[g'(w_n) h v_n + source(n, v_n phys)].

        Returns the half path (batch..., M+1, N, N/2) or just the final state.
        """
        st, sp, m = self.stepper, self.sp, self.cfg.steps
        v = np.zeros(batch + sp.half_shape, dtype=complex)
        path = np.empty(batch + (m + 1,) + sp.half_shape, dtype=complex) if store else None
        if store:
            path[..., 0, :, :] = v
        for n in range(m):
            vp = sp.to_phys(v)
            v = st.step(v, self.dg_h[n] * vp + source(n, vp))
            _check_finite(v, self.cfg.blowup, what, n + 1)
            if store:
                path[..., n + 1, :, :] = v
        return path if store else v

    def first_variation(self, k_half: np.ndarray) -> np.ndarray:
        """Batched v_{h,k}: k_half has shape (batch..., N, N/2)."""
        kp = self.sp.to_phys(k_half)
        return self.march(lambda n, vp: self.g[n] * kp, batch=k_half.shape[:-2], what="first variation")

    def second_variation(self, vk: np.ndarray, vl: np.ndarray, k_half: np.ndarray, l_half: np.ndarray,
                         part: str) -> np.ndarray:
        """Batched second variation; part in {'cm', 'wn', 'both'}."""
        sp = self.sp
        vkp = sp.to_phys(vk[..., :-1, :, :])
        vlp = sp.to_phys(vl[..., :-1, :, :])
        kp = sp.to_phys(k_half)
        lp = sp.to_phys(l_half)
        batch = vk.shape[:-3]
        tix = (slice(None),) * len(batch)

        def source(n, vp):
            s = 0.0
            a, b = vkp[tix + (n,)], vlp[tix + (n,)]
            if part in ("cm", "both"):
                s = s + self.d2g_h[n] * a * b
            if part in ("wn", "both"):
                s = s + self.dg[n] * (a * lp + b * kp)
            return s

        return self.march(source, batch=batch, what="second variation")

    def adjoint(self, mu_half: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Discrete adjoint for the functional y -> sum_n <mu_n, y_n>.

        Returns ``(q, grad)`` where q[n] = (Phi p_{n+1}) on the padded grid for
        n = 0..M-1 and grad is the L^2 representer of
        k -> sum_n <mu_n, v_{h,k}(t_n)> as a half spectrum.  For any linear
        march with extra forcing S_n, sum_n <mu_n, v_n> = sum_n mean(q[n] S_n).
        """
        st, sp, m = self.stepper, self.sp, self.cfg.steps
        q = np.empty((m,) + (sp.p, sp.p))
        grad_phys = np.zeros((sp.p, sp.p))
        p = mu_half[m].copy()
        for n in range(m - 1, -1, -1):
            qp = sp.to_phys(st.Phi * p)
            q[n] = qp
            grad_phys += self.g[n] * qp
            if n > 0:
                p = mu_half[n] + st.E * p + sp.from_phys(self.dg_h[n] * qp)
        return q, sp.from_phys(grad_phys)


def _path_half(v: TimePath) -> np.ndarray:
    return v.half


def solve_first_variation(w: TimePath, h: TorusField, k: TorusField, cfg: SolverConfig) -> TimePath:
    """v_{h,k}: directional derivative of h -> w_h in direction k."""
    lin = Linearization.at(w, h, cfg)
    return TimePath.from_half(lin.first_variation(k.half), cfg.t_grid)


def solve_second_variation_nonsingular(w: TimePath, h: TorusField, vk: TimePath, vl: TimePath,
                                       cfg: SolverConfig) -> TimePath:
    """Part of v_{h,k,l} forced by g''(w) v_k v_l h."""
    lin = Linearization.at(w, h, cfg)
    zero = np.zeros(lin.sp.half_shape, dtype=complex)
    return TimePath.from_half(lin.second_variation(vk.half, vl.half, zero, zero, "cm"), cfg.t_grid)


def solve_second_variation_singular(w: TimePath, h: TorusField, vk: TimePath, vl: TimePath,
                                    k: TorusField, l: TorusField, cfg: SolverConfig) -> TimePath:
    """Part of v_{h,k,l} forced by g'(w) (v_k l + v_l k)."""
    lin = Linearization.at(w, h, cfg)
    return TimePath.from_half(lin.second_variation(vk.half, vl.half, k.half, l.half, "wn"), cfg.t_grid)


def solve_second_variation_combined(w: TimePath, h: TorusField, vk: TimePath, vl: TimePath,
                                    k: TorusField, l: TorusField, cfg: SolverConfig) -> TimePath:
    """Full v_{h,k,l} from a single march (test oracle for the split)."""
    lin = Linearization.at(w, h, cfg)
    return TimePath.from_half(lin.second_variation(vk.half, vl.half, k.half, l.half, "both"), cfg.t_grid)
