"""Reference configurations with independently computable answers.

* ``linear_quadratic``: additive noise (g constant) and a quadratic profile.
  The control-to-state map is affine, the phase functional is an exact
  quadratic, and the minimiser, Hessian and a0 = (1 + alpha)^(-1/2) are known
  in closed form.
* ``nonlinear``: g = s sin^3 (vanishing to second order at 0), a smooth
  non-zero initial field and a bounded cosine profile; used for the
  Monte-Carlo identity checks and the end-to-end expansion.
* ``heat_only``: g = 0, where everything is deterministic and a0 = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hessian import basis_half
from .observables import Observable, make_profile
from .solver import Linearization, SolverConfig, make_g, solve_gpam
from .torus import TorusField, spectral


@dataclass
class Setup:
    cfg: SolverConfig
    F: Observable
    u0: TorusField

    def base(self, h: TorusField | None = None):
        h = TorusField.zeros(self.cfg.n) if h is None else h
        return h, solve_gpam(h, self.u0, self.cfg)


def smooth_u0(n: int) -> TorusField:
    """1 + cos(2 pi x) / 2."""
    return TorusField.constant(1.0, n) + TorusField.trig((1, 0), n, "cos", 0.5)


def nonlinear(n: int = 36, T: float = 0.25, steps: int = 32) -> Setup:
    cfg = SolverConfig(n, T, steps, make_g("sin3", 2.5))
    weight = TorusField.constant(1.0, n) + TorusField.trig((1, 0), n, "cos", 0.5)
    F = Observable("endpoint", make_profile("cosine", a=0.5, b=5.0, x0=0.9), weight)
    return Setup(cfg, F, smooth_u0(n))


def heat_only(n: int = 32, T: float = 0.25, steps: int = 32, kind: str = "endpoint") -> Setup:
    cfg = SolverConfig(n, T, steps, make_g("zero"))
    weight = TorusField.constant(1.0, n) + TorusField.trig((0, 1), n, "sin", 0.7)
    F = Observable(kind, make_profile("tanh", a=1.0, b=1.5, x0=0.2), weight)
    return Setup(cfg, F, smooth_u0(n))


def lq_weight(n: int, rich: bool = False) -> TorusField:
    """Test function for the linear-quadratic oracle.

    Default: a few low modes, inside the first 32 real basis functions.
    ``rich``: every retained mode with |phi_k| ~ (1 + |k|^2)^(-3/2).
    """
    if not rich:
        return (TorusField.constant(0.8, n) + TorusField.trig((1, 0), n, "cos", 0.6)
                + TorusField.trig((1, 1), n, "sin", 0.4) + TorusField.trig((0, 2), n, "cos", 0.3))
    k = np.fft.fftfreq(n, 1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    phase = np.exp(2j * np.pi * np.sin(3.0 * k[:, None] + 7.0 * k[None, :]))
    return TorusField((1.0 + k2) ** -1.5 * phase)


def linear_quadratic(n: int = 32, T: float = 0.25, steps: int = 32, g_const: float = 2.0, a: float = 3.0,
                     x0: float = 0.7, kind: str = "endpoint", rich: bool = False) -> Setup:
    cfg = SolverConfig(n, T, steps, make_g("constant", g_const))
    F = Observable(kind, make_profile("quadratic", a=a, x0=x0), lq_weight(n, rich))
    return Setup(cfg, F, smooth_u0(n))


@dataclass
class LQSolution:
    psi: np.ndarray  # half spectrum of the pairing representer
    offset: float  # s(w_0) - x0
    curvature: float
    h_star: TorusField
    value: float
    alpha: float

    @property
    def a0(self) -> float:
        return 1.0 / math.sqrt(1.0 + self.alpha)


def lq_closed_form(setup: Setup) -> LQSolution:
    """Minimiser of a/2 (m + <psi, h>)^2 + ||h||^2/2, psi from one adjoint solve."""
    cfg, F = setup.cfg, setup.F
    sp = spectral(cfg.n)
    h0, w0 = setup.base()
    lin = Linearization.at(w0, h0, cfg)
    mu = F.time_weights(cfg.t_grid)[:, None, None] * F.weight.half[None]
    _, psi = lin.adjoint(mu)
    a = F.profile.params["a"]
    m = F.pairing(w0) - F.profile.params["x0"]
    nrm2 = float(sp.pair(psi, psi))
    t = -a * m / (1.0 + a * nrm2)
    h = TorusField.from_half(t * psi)
    value = 0.5 * a * m * m / (1.0 + a * nrm2) + F.profile.params["c"]
    return LQSolution(psi, m, a, h, value, a * nrm2)


def lq_dense(setup: Setup, size: int = 32) -> TorusField:
    """Minimiser from the dense optimality system on the first ``size`` basis functions.

    Coordinates of the pairing functional come from forward first-variation
    solves (no adjoint), and the quadratic system (I + a psi psi^T) y = -a m psi
    is solved with numpy.linalg.solve.
    """
    cfg, F = setup.cfg, setup.F
    h0, w0 = setup.base()
    E = basis_half(size, cfg.n)
    V = Linearization.at(w0, h0, cfg).first_variation(E)
    psi = F.pairing_half(V, cfg.t_grid)
    a = F.profile.params["a"]
    m = F.pairing(w0) - F.profile.params["x0"]
    y = np.linalg.solve(np.eye(size) + a * np.outer(psi, psi), -a * m * psi)
    return TorusField.from_half(np.tensordot(y, E, axes=(0, 0)))
