"""Minimisation of the phase functional  h -> F(w_h) + ||h||^2 / 2  over L^2(T^2).

The gradient is h + G with G the L^2 representer of k -> DF(v_{h,k}),
obtained from one backward adjoint march of the discretised equations.
Search uses L-BFGS directions with Armijo backtracking (c1 = 1e-4, halving).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit
from .hessian import eigen_sym
from .observables import Observable
from .solver import Linearization, SolverConfig, march_gpam
from .torus import FOUR_PI2, TorusField, sobolev_norm, spectral


def _u0_half(u0: TorusField | None, n: int) -> np.ndarray:
    return np.zeros((n, n // 2), dtype=complex) if u0 is None else u0.half


def _value_half(h_half: np.ndarray, F: Observable, cfg: SolverConfig, u0_half: np.ndarray) -> tuple[float, np.ndarray]:
    sp = spectral(cfg.n)
    path = march_gpam(cfg, h_half, u0_half)
    s = float(F.pairing_half(path, cfg.t_grid))
    return float(F.profile.f(s)) + 0.5 * float(sp.pair(h_half, h_half)), path


def _grad_half(h_half: np.ndarray, path: np.ndarray, F: Observable, cfg: SolverConfig) -> np.ndarray:
    if F.profile.name == "constant" or cfg.g.is_zero:
        return h_half.copy()
    lin = Linearization(path, h_half, cfg)
    slope = float(F.profile.df(F.pairing_half(path, cfg.t_grid)))
    mu = slope * F.time_weights(cfg.t_grid)[:, None, None] * F.weight.half[None]
    _, G = lin.adjoint(mu)
    return h_half + G


def phase_functional(h: TorusField, F: Observable, cfg: SolverConfig, u0: TorusField | None = None) -> float:
    """F(w_h) + ||h||^2 / 2."""
    return _value_half(h.half, F, cfg, _u0_half(u0, cfg.n))[0]


def phase_gradient(h: TorusField, F: Observable, cfg: SolverConfig, u0: TorusField | None = None) -> TorusField:
    """L^2 gradient h + G of the phase functional (adjoint method)."""
    _, path = _value_half(h.half, F, cfg, _u0_half(u0, cfg.n))
    return TorusField.from_half(_grad_half(h.half, path, F, cfg))


@dataclass
class MinimizerResult:
    h_star: TorusField
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    spectrum_decay: float | None = None
    history: list[float] = field(default_factory=list)
    fd_checks: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "value": self.value,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "spectrum_decay": self.spectrum_decay,
            "h_l2": sobolev_norm(self.h_star, 0.0),
        }


def minimize(F: Observable, cfg: SolverConfig, u0: TorusField | None = None, h_init: TorusField | None = None,
             max_iter: int = 200, tol: float = 1e-8, memory: int = 8, fd_check_every: int = 0,
             step_rule: str = "lbfgs") -> MinimizerResult:
    """Descent on the phase functional until ||gradient||_L2 <= tol.

    step_rule "lbfgs" uses curvature pairs; "gradient" is plain steepest
    descent.  Both use Armijo backtracking.  When max_iter is exhausted the best
    iterate is returned with ``converged = False``.
    """
    sp = spectral(cfg.n)
    u0h = _u0_half(u0, cfg.n)
    h = np.zeros(sp.half_shape, dtype=complex) if h_init is None else h_init.half.copy()
    val, path = _value_half(h, F, cfg, u0h)
    grad = _grad_half(h, path, F, cfg)
    pairs: deque = deque(maxlen=memory)
    history = [val]
    fd_checks = []
    it = 0
    gnorm = math.sqrt(float(sp.pair(grad, grad)))
    while gnorm > tol and it < max_iter:
        if fd_check_every and it % fd_check_every == 0:
            fd_checks.append(_fd_direction_error(h, grad, F, cfg, u0h))
        d = _direction(grad, pairs, sp) if step_rule == "lbfgs" else -grad
        slope = float(sp.pair(grad, d))
        if slope >= 0:
            pairs.clear()
            d = -grad
            slope = -gnorm**2
        step = 1.0
        while True:
            trial = h + step * d
            tval, tpath = _value_half(trial, F, cfg, u0h)
            if tval <= val + 1e-4 * step * slope or step < 1e-14:
                break
            step *= 0.5
        tgrad = _grad_half(trial, tpath, F, cfg)
        s_vec, y_vec = trial - h, tgrad - grad
        sy = float(sp.pair(s_vec, y_vec))
        if sy > 1e-16 * math.sqrt(float(sp.pair(s_vec, s_vec)) * float(sp.pair(y_vec, y_vec))):
            pairs.append((s_vec, y_vec, sy))
        if step < 1e-14 and tval >= val:
            break
        h, val, path, grad = trial, tval, tpath, tgrad
        gnorm = math.sqrt(float(sp.pair(grad, grad)))
        history.append(val)
        it += 1
    h_field = TorusField.from_half(h)
    try:
        decay = regularity_diagnostic(h_field)["exponent"]
    except DegenerateFit:
        decay = None
    return MinimizerResult(h_field, val, gnorm, it, gnorm <= tol, decay, history, fd_checks)


def _direction(grad: np.ndarray, pairs: deque, sp) -> np.ndarray:
    q = -grad.copy()
    alphas = []
    for s, y, sy in reversed(pairs):
        a = float(sp.pair(s, q)) / sy
        alphas.append(a)
        q = q - a * y
    if pairs:
        s, y, sy = pairs[-1]
        q = q * (sy / float(sp.pair(y, y)))
    for (s, y, sy), a in zip(pairs, reversed(alphas)):
        b = float(sp.pair(y, q)) / sy
        q = q + (a - b) * s
    return q


def _fd_direction_error(h: np.ndarray, grad: np.ndarray, F: Observable, cfg: SolverConfig, u0h: np.ndarray,
                        eps: float = 1e-4) -> float:
    """Relative mismatch of adjoint vs central-difference slope along the gradient."""
    sp = spectral(cfg.n)
    nrm = math.sqrt(float(sp.pair(grad, grad)))
    if nrm == 0:
        return 0.0
    d = grad / nrm
    fp = _value_half(h + eps * d, F, cfg, u0h)[0]
    fm = _value_half(h - eps * d, F, cfg, u0h)[0]
    fd = (fp - fm) / (2 * eps)
    return abs(fd - nrm) / max(abs(nrm), 1e-300)


def multistart(F: Observable, cfg: SolverConfig, u0: TorusField | None = None, starts: int = 5, seed: int = 0,
               scale: float = 1.0, workers: int = 1, **opts) -> tuple[MinimizerResult, dict]:
    """Minimise from zero plus ``starts`` random smooth initial fields; flag distinct basins."""
    n = cfg.n
    rng = np.random.default_rng(seed)
    inits: list[TorusField | None] = [None]
    k = np.fft.fftfreq(n, 1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    for _ in range(starts):
        m = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * (1.0 + k2) ** -1.5
        inits.append(TorusField(m * scale))

    def run(h0):
        return minimize(F, cfg, u0, h_init=h0, **opts)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, inits))
    else:
        results = [run(h0) for h0 in inits]
    tol = opts.get("tol", 1e-8)
    values = [r.value for r in results]
    best = min(range(len(results)), key=lambda i: (values[i], i))
    report = {
        "values": values,
        "best_index": best,
        "multiple_basins": bool(max(values) - min(values) > max(tol, 1e-10 * abs(values[best]))),
    }
    return results[best], report


def regularity_diagnostic(h: TorusField, kappa: float = 0.05, min_shells: int = 4) -> dict:
    """Power-law fit of shell-averaged |h_k|^2 against |k|, plus Sobolev norms.

    The largest stable s is the largest tested index whose Sobolev norm, computed
    from the lower half of the spectral band, agrees with the full-band value
    to within 5 percent.
    """
    n = h.n
    k = np.fft.fftfreq(n, 1.0 / n)
    kabs = np.sqrt(k[:, None] ** 2 + k[None, :] ** 2)
    power = np.abs(h.modes) ** 2
    shells = np.rint(kabs).astype(int)
    inside = (np.abs(k)[:, None] < n // 2) & (np.abs(k)[None, :] < n // 2) & (shells > 0) & (shells < n // 2)
    js, avg = [], []
    for j in np.unique(shells[inside]):
        sel = inside & (shells == j)
        p = float(power[sel].mean())
        if p > 1e-300:
            js.append(j)
            avg.append(p)
    if len(js) < min_shells:
        raise DegenerateFit(f"only {len(js)} populated shells, need {min_shells}")
    slope, intercept = np.polyfit(np.log(js), np.log(avg), 1)
    s_list = [0.0, 0.5, 1.0 - 2.0 * kappa, 1.0]
    norms = {f"{s:g}": sobolev_norm(h, s) for s in s_list}
    low = np.where(kabs < n / 4, h.modes, 0.0)
    stable = None
    for s in np.linspace(0.0, 3.0, 31):
        full = float(np.sqrt(np.sum((1 + FOUR_PI2 * kabs**2) ** s * power)))
        part = float(np.sqrt(np.sum((1 + FOUR_PI2 * kabs**2) ** s * np.abs(low) ** 2)))
        if full > 0 and abs(full - part) <= 0.05 * full:
            stable = float(s)
    return {"exponent": float(slope), "intercept": float(intercept), "shells": len(js),
            "sobolev": norms, "largest_stable_s": stable}


def nondegeneracy_check(A: np.ndarray) -> float:
    """1 + smallest eigenvalue of A; positive iff the truncated Hessian is positive."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 1.0
    lam, _ = eigen_sym(A)
    return float(1.0 + lam[0])


def rayleigh_min_fd(h: TorusField, F: Observable, cfg: SolverConfig, u0: TorusField | None, directions: np.ndarray,
                    eps: float = 1e-3) -> float:
    """Smallest Rayleigh quotient D^2 phase[d, d] / ||d||^2 by second differences."""
    sp = spectral(cfg.n)
    u0h = _u0_half(u0, cfg.n)
    f0 = _value_half(h.half, F, cfg, u0h)[0]
    best = math.inf
    for d in directions:
        nrm2 = float(sp.pair(d, d))
        fp = _value_half(h.half + eps * d, F, cfg, u0h)[0]
        fm = _value_half(h.half - eps * d, F, cfg, u0h)[0]
        best = min(best, (fp - 2 * f0 + fm) / (eps * eps * nrm2))
    return best
