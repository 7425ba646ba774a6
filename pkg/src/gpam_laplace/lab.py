"""Monte-Carlo estimators around the Laplace expansion at fixed mollification.

Per noise sample xi (mollified, unit white noise underneath) at a base point
(h, w):

    u1      : (d_t - Delta) u1  = g(w) xi + g'(w) h u1
    u2tilde : (d_t - Delta) u2~ = 2 g'(w) u1 xi - 2 g'(w) g(w) c_delta + g'(w) h u2~
    u2      : u2~ with the extra forcing g''(w) h u1^2

    lambda sample = DF[u2~],   Qhat = D^2F[u1, u1] + DF[u2]

The estimators march u1 only; DF of u2~ and u2 is read off by contracting
their forcing with the adjoint state of the observable (same identity as
used by the Hessian assembly).  ``solve_linear_spde_pair`` marches all
equations explicitly and serves as the reference path.

In the explicit march the noise at step n meets u1_n, which only saw the
noise through g(w_{n-1}).  The counterterm is therefore lagged: at step
n >= 1 it reads -2 g'(w_n) g(w_{n-1}) c_delta, and it is absent at n = 0.
This is the form whose divergent part cancels exactly as delta -> 0.

Samples are processed in fixed-size batches, each batch a pure function of
(seed, sample indices); results are reduced in sample order so every
estimate is independent of the worker count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .hessian import HessianBundle, basis_half, basis_modes
from .noise import MollifierSpec, NoiseSample, noise_half, renorm_constant
from .observables import Observable
from .solver import Linearization, SolverConfig, Stepper, _check_finite
from .errors import PicardDivergence
from .torus import TimePath, TorusField, spectral

BATCH = 128


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed_base: int
    delta: float | None
    config_hash: str | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, x: np.ndarray, seed: int, delta: float | None, config_hash: str | None = None,
                     **extra) -> MCEstimate:
        x = np.asarray(x, dtype=float)
        n = len(x)
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(x.mean()), se, n, seed, delta, config_hash, extra)

    def z_against(self, value: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == value else math.inf
        return (self.mean - value) / self.stderr

    def as_dict(self) -> dict:
        return asdict(self)


def _batches(n: int, batch: int = BATCH) -> list[range]:
    return [range(s, min(s + batch, n)) for s in range(0, n, batch)]


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _as_spec(mollifier: str | MollifierSpec, delta: float) -> MollifierSpec:
    return mollifier if isinstance(mollifier, MollifierSpec) else MollifierSpec(mollifier, delta)


# ---------------------------------------------------------------------------
# reference solver for the linear system
# ---------------------------------------------------------------------------


def solve_linear_spde_pair(h: TorusField, w: TimePath, xi: NoiseSample | TorusField, c_delta: float,
                           cfg: SolverConfig, full: bool = False):
    """March u1 then u2tilde (or the full u2 when ``full``) with zero initial data."""
    field_ = xi.field if isinstance(xi, NoiseSample) else xi
    lin = Linearization.at(w, h, cfg)
    sp = lin.sp
    u1 = lin.first_variation(field_.half)
    u1p = sp.to_phys(u1[:-1])
    xip = sp.to_phys(field_.half)

    def source(n, vp):
        s = 2.0 * lin.dg[n] * u1p[n] * xip
        if n > 0:
            s = s - 2.0 * lin.dg[n] * lin.g[n - 1] * c_delta
        if full:
            s = s + lin.d2g_h[n] * u1p[n] ** 2
        return s

    u2 = lin.march(source, what="second-order noise response")
    t = cfg.t_grid
    return TimePath.from_half(u1, t), TimePath.from_half(u2, t)


# ---------------------------------------------------------------------------
# batched chaos sampler
# ---------------------------------------------------------------------------


class ChaosSampler:
    """Per-sample s(u1), DF[u2tilde] and DF[g''-part of u2] at a fixed base point."""

    def __init__(self, h: TorusField, w: TimePath, F: Observable, cfg: SolverConfig, c_delta: float):
        self.lin = Linearization.at(w, h, cfg)
        self.F = F
        self.cfg = cfg
        self.c_delta = c_delta
        self.s_w = F.pairing(w)
        self.slope = float(F.profile.df(self.s_w))
        self.curv = float(F.profile.d2f(self.s_w))
        mu = self.slope * F.time_weights(cfg.t_grid)[:, None, None] * F.weight.half[None]
        self.q, _ = self.lin.adjoint(mu)
        self.tw = F.time_weights(cfg.t_grid)
        lin = self.lin
        self.lam_const = float(sum(np.mean(self.q[n] * (-2.0 * lin.dg[n] * lin.g[n - 1] * c_delta))
                                   for n in range(1, cfg.steps)))
        self.q_dg2 = 2.0 * self.q * lin.dg
        self.q_d2gh = self.q * lin.d2g_h
        self.phi_half = F.weight.half

    def run(self, xi_half: np.ndarray) -> dict[str, np.ndarray]:
        lin, sp, st = self.lin, self.lin.sp, self.lin.stepper
        b = xi_half.shape[0]
        xip = sp.to_phys(xi_half)
        v = np.zeros((b,) + sp.half_shape, dtype=complex)
        s1 = np.zeros(b)
        lam = np.full(b, self.lam_const)
        cm = np.zeros(b)
        for n in range(self.cfg.steps):
            if self.tw[n]:
                s1 += self.tw[n] * sp.pair(v, self.phi_half)
            vp = sp.to_phys(v)
            lam += np.mean(self.q_dg2[n] * vp * xip, axis=(-2, -1))
            cm += np.mean(self.q_d2gh[n] * vp * vp, axis=(-2, -1))
            v = st.step(v, lin.g[n] * xip + lin.dg_h[n] * vp)
            _check_finite(v, self.cfg.blowup, "noise response", n + 1)
        s1 += self.tw[-1] * sp.pair(v, self.phi_half)
        return {"s_u1": s1, "lam": lam, "cm": cm, "qhat": self.curv * s1 * s1 + lam + cm}


def _chaos_samples(sampler: ChaosSampler, spec: MollifierSpec, n: int, seed: int, workers: int,
                   extra_basis: np.ndarray | None = None) -> dict[str, np.ndarray]:
    nn = sampler.cfg.n
    sp = spectral(nn)

    def one(idx):
        xi = noise_half(seed, idx, nn, spec)
        out = sampler.run(xi)
        if extra_basis is not None:
            out["proj"] = sp.pair(xi[:, None], extra_basis[None])
        return out

    parts = _map(one, _batches(n), workers)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def estimate_lambda(h: TorusField, w: TimePath, F: Observable, delta: float, n: int, seed: int, cfg: SolverConfig,
                    mollifier: str | MollifierSpec = "sharp", workers: int = 1,
                    config_hash: str | None = None) -> MCEstimate:
    """lambda_delta = E[DF(u2tilde)] by Monte Carlo."""
    if n < 2:
        raise ValueError("need at least two samples")
    spec = _as_spec(mollifier, delta)
    c = renorm_constant(delta, spec, cfg.n)
    sampler = ChaosSampler(h, w, F, cfg, c)
    lam = _chaos_samples(sampler, spec, n, seed, workers)["lam"]
    return MCEstimate.from_samples(lam, seed, delta, config_hash, mollifier=spec.shape, c_delta=c)


def sample_hessian_Q(h: TorusField, w: TimePath, F: Observable, xi: NoiseSample | TorusField, c_delta: float,
                     cfg: SolverConfig) -> float:
    """Qhat = D^2F[u1, u1] + DF[u2] for a single noise sample (explicit marches)."""
    u1, u2 = solve_linear_spde_pair(h, w, xi, c_delta, cfg, full=True)
    return F.d2(w, u1, u1) + F.d1(w, u2)


@dataclass
class TraceIdentityResult:
    mean_qhat: MCEstimate
    lam: MCEstimate
    trace_q: float
    z: float
    paired_stderr: float


def trace_identity_check(h: TorusField, w: TimePath, F: Observable, cfg: SolverConfig, bundle: HessianBundle,
                         delta: float, n: int, seed: int, mollifier: str | MollifierSpec = "sharp",
                         workers: int = 1) -> TraceIdentityResult:
    """Compare E[Qhat] with trace_q + lambda_delta from the same samples.

    The z-score uses the per-sample difference Qhat - lambda sample, whose mean
    is E[Qhat] - lambda_delta, so the correlation between both estimates is
    accounted for exactly.
    """
    spec = _as_spec(mollifier, delta)
    c = renorm_constant(delta, spec, cfg.n)
    out = _chaos_samples(ChaosSampler(h, w, F, cfg, c), spec, n, seed, workers)
    diff = MCEstimate.from_samples(out["qhat"] - out["lam"], seed, delta)
    return TraceIdentityResult(
        MCEstimate.from_samples(out["qhat"], seed, delta),
        MCEstimate.from_samples(out["lam"], seed, delta),
        bundle.trace_q,
        diff.z_against(bundle.trace_q),
        diff.stderr,
    )


@dataclass
class LambdaStudy:
    deltas: list[float]
    estimates: list[MCEstimate]
    differences: list[float]
    difference_stderr: list[float]
    decreasing: bool

    def as_dict(self) -> dict:
        return {
            "deltas": self.deltas,
            "estimates": [e.as_dict() for e in self.estimates],
            "differences": self.differences,
            "difference_stderr": self.difference_stderr,
            "decreasing": self.decreasing,
        }


def lambda_delta_study(h: TorusField, w: TimePath, F: Observable, deltas: list[float], n: int, seed: int,
                       cfg: SolverConfig, mollifier: str | MollifierSpec = "sharp", workers: int = 1) -> LambdaStudy:
    """lambda_delta along decreasing delta with common random numbers."""
    deltas = [float(d) for d in deltas]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    shape = mollifier.shape if isinstance(mollifier, MollifierSpec) else mollifier
    samples, ests = [], []
    for d in deltas:
        spec = MollifierSpec(shape, d)
        c = renorm_constant(d, spec, cfg.n)
        lam = _chaos_samples(ChaosSampler(h, w, F, cfg, c), spec, n, seed, workers)["lam"]
        samples.append(lam)
        ests.append(MCEstimate.from_samples(lam, seed, d, mollifier=shape, c_delta=c))
    diffs, ses = [], []
    for a, b in zip(samples, samples[1:]):
        dd = b - a
        diffs.append(float(abs(dd.mean())))
        ses.append(float(dd.std(ddof=1) / math.sqrt(len(dd))))
    decreasing = all(y < x for x, y in zip(diffs, diffs[1:]))
    return LambdaStudy(deltas, ests, diffs, ses, decreasing)


@dataclass
class CovarianceResult:
    pairs: list[tuple[int, int]]
    mc: list[float]
    stderr: list[float]
    expected: list[float]
    z: list[float]


def covariance_check(h: TorusField, w: TimePath, F: Observable, cfg: SolverConfig, bundle: HessianBundle,
                     delta: float, pairs: list[tuple[int, int]], n: int, seed: int,
                     mollifier: str | MollifierSpec = "sharp", workers: int = 1) -> CovarianceResult:
    """MC estimate of (1/2) E[(Qhat - mean) xi(e_i) xi(e_j)] against rho_i^2 rho_j^2 A[i, j].

    xi(e_i) = rho_i Z_i with Z_i standard normal, so the second-chaos kernel of
    Qhat seen through mollified test variables carries two factors of rho per
    index.
    """
    spec = _as_spec(mollifier, delta)
    c = renorm_constant(delta, spec, cfg.n)
    idx = sorted({i for p in pairs for i in p})
    size = max(idx) + 1
    E = basis_half(size, cfg.n)
    out = _chaos_samples(ChaosSampler(h, w, F, cfg, c), spec, n, seed, workers, extra_basis=E)
    rho = np.array([float(spec.rhohat(np.sqrt(_basis_k2(E[i], cfg.n)))) for i in range(size)])
    centred = out["qhat"] - out["qhat"].mean()
    mc, se, ex, z = [], [], [], []
    for i, j in pairs:
        x = 0.5 * centred * out["proj"][:, i] * out["proj"][:, j]
        m = float(x.mean())
        s = float(x.std(ddof=1) / math.sqrt(len(x)))
        e = float(rho[i] ** 2 * rho[j] ** 2 * bundle.A[i, j])
        mc.append(m)
        se.append(s)
        ex.append(e)
        z.append((m - e) / s if s > 0 else (0.0 if m == e else math.inf))
    return CovarianceResult(list(pairs), mc, se, ex, z)


def _basis_k2(half: np.ndarray, n: int) -> float:
    sp = spectral(n)
    i = np.argmax(np.abs(half))
    return float(sp.k2.ravel()[i])


# ---------------------------------------------------------------------------
# renormalised gPAM and J(eps)
# ---------------------------------------------------------------------------


def _march_renormalized(cfg: SolverConfig, eps: float, xi_half: np.ndarray, h_half: np.ndarray,
                        u0_half: np.ndarray, c_delta: float, store: bool):
    st = Stepper(cfg)
    sp = st.sp
    g = cfg.g
    drive = sp.to_phys(eps * xi_half + h_half)
    u = np.broadcast_to(u0_half, xi_half.shape).copy()
    path = [u] if store else None
    g_prev = None
    for n in range(cfg.steps):
        up = sp.to_phys(u)
        gu = g.g(up)
        force = gu * drive
        if g_prev is not None:
            force = force - eps * eps * c_delta * g.dg(up) * g_prev
        u = st.step(u, force)
        g_prev = gu
        _check_finite(u, cfg.blowup, "renormalised gPAM", n + 1)
        if store:
            path.append(u)
    return np.stack(path, axis=-3) if store else u


def simulate_renormalized_gpam(epsilon: float, h: TorusField, xi: NoiseSample | TorusField, c_delta: float,
                               cfg: SolverConfig, u0: TorusField | None = None) -> TimePath:
    """March g(u)(eps xi + h) minus the lagged counterterm eps^2 c_delta g'(u_n) g(u_{n-1}) from u0."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    field_ = xi.field if isinstance(xi, NoiseSample) else xi
    u0h = np.zeros((cfg.n, cfg.n // 2), dtype=complex) if u0 is None else u0.half
    path = _march_renormalized(cfg, epsilon, field_.half, h.half, u0h, c_delta, store=True)
    return TimePath.from_half(path, cfg.t_grid)


def low_mode_mask(modes: int, n: int) -> np.ndarray:
    """Half-spectrum mask of the first ``modes`` real basis functions."""
    return (np.abs(basis_half(modes, n)).sum(axis=0) > 0).astype(float)


def _phase_values(F: Observable, cfg: SolverConfig, eps: float, xi: np.ndarray, h_half: np.ndarray,
                  u0h: np.ndarray, c_delta: float) -> np.ndarray:
    """F(u^eps) per sample, nan where the march left the bounded regime."""
    try:
        path = _march_renormalized(cfg, eps, xi, h_half, u0h, c_delta, store=F.kind != "endpoint")
    except PicardDivergence:
        # fall back to per-sample marches so only the offending samples are dropped
        out = np.empty(xi.shape[0])
        for b in range(xi.shape[0]):
            out[b] = _phase_values(F, cfg, eps, xi[b : b + 1], h_half, u0h, c_delta)[0] if xi.shape[0] > 1 else np.nan
        return out
    if F.kind == "endpoint":
        s = spectral(cfg.n).pair(path, F.weight.half)
    else:
        s = F.pairing_half(path, cfg.t_grid)
    return np.asarray(F.profile.f(s), dtype=float)


def estimate_J(epsilon: float, delta: float, F: Observable, n: int, seed: int, cfg: SolverConfig,
               u0: TorusField | None = None, h: TorusField | None = None, mollifier: str | MollifierSpec = "sharp",
               c_delta: float | None = None, modes: int | None = None, shift: float = 0.0, workers: int = 1,
               config_hash: str | None = None) -> MCEstimate:
    """Plain MC of exp(-(F(u^eps) - shift) / eps^2); the result times exp(-shift/eps^2) is J(eps).

    The driving control is h = 0 unless given.  ``modes`` restricts the noise
    to the first real basis functions (low-dimensional quadrature oracle).  A
    march that leaves the bounded regime contributes 0 (explosion before T).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    spec = _as_spec(mollifier, delta)
    c = renorm_constant(delta, spec, cfg.n) if c_delta is None else c_delta
    nn = cfg.n
    u0h = np.zeros((nn, nn // 2), dtype=complex) if u0 is None else u0.half
    hh = np.zeros((nn, nn // 2), dtype=complex) if h is None else h.half
    mask = low_mode_mask(modes, nn) if modes else 1.0

    def one(idx):
        xi = noise_half(seed, idx, nn, spec) * mask
        fv = _phase_values(F, cfg, epsilon, xi, hh, u0h, c)
        return np.where(np.isnan(fv), 0.0, np.exp(-(fv - shift) / epsilon**2))

    vals = np.concatenate(_map(one, _batches(n), workers))
    return MCEstimate.from_samples(vals, seed, delta, config_hash, epsilon=epsilon, shift=shift, c_delta=c)


def j_quadrature(epsilon: float, F: Observable, cfg: SolverConfig, c_delta: float, modes: int, order: int = 8,
                 spec: MollifierSpec | None = None, u0: TorusField | None = None) -> float:
    """Tensor Gauss-Hermite value of J(eps) with noise restricted to ``modes`` basis functions."""
    nn = cfg.n
    E = basis_half(modes, nn)
    rho = np.ones(modes) if spec is None else np.array([float(spec.rhohat(np.sqrt(_basis_k2(e, nn)))) for e in E])
    x, wts = np.polynomial.hermite_e.hermegauss(order)
    wts = wts / wts.sum()
    grids = np.meshgrid(*([x] * modes), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wgrid = np.prod(np.meshgrid(*([wts] * modes), indexing="ij"), axis=0).ravel()
    u0h = np.zeros((nn, nn // 2), dtype=complex) if u0 is None else u0.half
    hh = np.zeros_like(u0h)
    total = 0.0
    for s in range(0, len(pts), 512):
        z = pts[s : s + 512] * rho
        xi = np.tensordot(z, E, axes=(1, 0))
        fv = _phase_values(F, cfg, epsilon, xi, hh, u0h, c_delta)
        total += float(np.sum(wgrid[s : s + 512] * np.where(np.isnan(fv), 0.0, np.exp(-fv / epsilon**2))))
    return total


@dataclass
class ExpansionRow:
    epsilon: float
    R: float
    stderr: float
    a0: float
    abs_error: float
    n: int
    warning: str | None = None


def validate_expansion(epsilons: list[float], delta: float, F: Observable, phase_value: float, a0: float,
                       n: int, seed: int, cfg: SolverConfig, u0: TorusField | None = None,
                       mollifier: str | MollifierSpec = "sharp", workers: int = 1) -> list[ExpansionRow]:
    """R(eps) = exp(phase_value / eps^2) * J(eps) against a0, one row per eps."""
    rows = []
    for eps in epsilons:
        est = estimate_J(eps, delta, F, n, seed, cfg, u0=u0, mollifier=mollifier, shift=phase_value,
                         workers=workers)
        warn = None
        if est.mean == 0 or est.stderr > 0.5 * abs(est.mean):
            warn = f"relative stderr {est.stderr / max(abs(est.mean), 1e-300):.2f} exceeds 50% at eps={eps}"
            warnings.warn(warn, RuntimeWarning, stacklevel=2)
        rows.append(ExpansionRow(eps, est.mean, est.stderr, a0, abs(est.mean - a0), n, warn))
    return rows


def rows_to_csv(rows: list[ExpansionRow]) -> str:
    lines = ["epsilon,R,stderr,a0,abs_error,n"]
    for r in rows:
        lines.append(f"{r.epsilon!r},{r.R!r},{r.stderr!r},{r.a0!r},{r.abs_error!r},{r.n}")
    return "\n".join(lines) + "\n"


def lambda_trace(h: TorusField, w: TimePath, F: Observable, cfg: SolverConfig, spec: MollifierSpec,
                 c_delta: float | None = None, chunk: int = 64) -> float:
    """Exact lambda_delta = sum_l rho_l^2 Atilde[l, l] + counterterm contribution.

    The lambda sample is a quadratic form in the noise coordinates, so its mean
    is a trace over every retained noise mode.  Deterministic oracle for
    ``estimate_lambda``.
    """
    c = renorm_constant(spec.delta, spec, cfg.n) if c_delta is None else c_delta
    sampler = ChaosSampler(h, w, F, cfg, c)
    lin, sp = sampler.lin, sampler.lin.sp
    modes = basis_half(len(basis_modes(cfg.n)), cfg.n)
    rho = np.array([float(spec.rhohat(np.sqrt(_basis_k2(e, cfg.n)))) for e in modes])
    keep = np.nonzero(rho * rho > 1e-18)[0]
    total = sampler.lam_const
    for s in range(0, len(keep), chunk):
        idx = keep[s : s + chunk]
        E = modes[idx]
        V = lin.first_variation(E)
        Ep = sp.to_phys(E)
        diag = np.zeros(len(idx))
        for n in range(cfg.steps):
            diag += np.mean(sampler.q_dg2[n] * sp.to_phys(V[:, n]) * Ep, axis=(-2, -1))
        total += float(np.sum(rho[idx] ** 2 * diag))
    return total

