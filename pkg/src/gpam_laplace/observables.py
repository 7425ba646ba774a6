"""Observables F(u) = f(linear pairing of the path with a weight field)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .torus import GridMismatch, TimePath, TorusField, spectral


@dataclass(frozen=True)
class Profile:
    """Scalar profile f with its first two derivatives and declared bounds.

    ``bounds`` holds (M0, M1, M2); ``math.inf`` marks an unbounded derivative
    (only the ``quadratic`` oracle profile has those).
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    bounds: tuple[float, float, float]
    params: dict = field(default_factory=dict)

    def check_bounds(self, lo: float = -50.0, hi: float = 50.0, n: int = 20001) -> bool:
        x = np.linspace(lo, hi, n)
        tol = 1e-12
        return all(
            np.max(np.abs(fn(x))) <= b + tol for fn, b in zip((self.f, self.df, self.d2f), self.bounds)
        )


def make_profile(name: str, a: float = 1.0, b: float = 1.0, x0: float = 0.0, c: float = 0.0) -> Profile:
    """Built-in profiles.

    constant  : c
    tanh      : c + a tanh(b (x - x0))
    cosine    : c + a (1 - cos(b (x - x0)))
    quadratic : c + a/2 (x - x0)^2            (unbounded; linear-quadratic oracle)
    """
    params = {"a": a, "b": b, "x0": x0, "c": c}
    if name == "constant":
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
        return Profile(name, lambda x: zero(x) + c, zero, zero, (abs(c), 0.0, 0.0), params)
    if name == "tanh":
        def f(x):
            return c + a * np.tanh(b * (np.asarray(x) - x0))

        def df(x):
            return a * b / np.cosh(b * (np.asarray(x) - x0)) ** 2

        def d2f(x):
            y = b * (np.asarray(x) - x0)
            return -2.0 * a * b * b * np.tanh(y) / np.cosh(y) ** 2

        # max |sech^2 tanh| = 2 / (3 sqrt 3)
        return Profile(name, f, df, d2f, (abs(c) + abs(a), abs(a * b), 4.0 * abs(a) * b * b / (3.0 * math.sqrt(3.0))), params)
    if name == "cosine":
        def f(x):
            return c + a * (1.0 - np.cos(b * (np.asarray(x) - x0)))

        def df(x):
            return a * b * np.sin(b * (np.asarray(x) - x0))

        def d2f(x):
            return a * b * b * np.cos(b * (np.asarray(x) - x0))

        return Profile(name, f, df, d2f, (abs(c) + 2.0 * abs(a), abs(a * b), abs(a) * b * b), params)
    if name == "quadratic":
        def f(x):
            return c + 0.5 * a * (np.asarray(x) - x0) ** 2

        def df(x):
            return a * (np.asarray(x) - x0)

        def d2f(x):
            return a + 0.0 * np.asarray(x)

        return Profile(name, f, df, d2f, (math.inf, math.inf, abs(a)), params)
    raise ValueError(f"unknown profile {name!r}")


@dataclass(frozen=True)
class Observable:
    """F(u) = f(s(u)) with s(u) = <u(T), phi> (endpoint) or int_0^T <u(t), phi> dt."""

    kind: str
    profile: Profile
    weight: TorusField

    def __post_init__(self):
        if self.kind not in ("endpoint", "time_average"):
            raise ValueError(f"unknown observable kind {self.kind!r}")

    def time_weights(self, t_grid: np.ndarray) -> np.ndarray:
        m = len(t_grid)
        w = np.zeros(m)
        if self.kind == "endpoint":
            w[-1] = 1.0
        else:
            dt = t_grid[1] - t_grid[0]
            w[:] = dt
            w[0] = w[-1] = 0.5 * dt
        return w

    def _check(self, u: TimePath):
        if u.n != self.weight.n:
            raise GridMismatch(f"path grid {u.n} does not match weight grid {self.weight.n}")

    # pairing with half-spectrum paths; leading batch axes allowed
    def pairing_half(self, half_path: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
        sp = spectral(self.weight.n)
        per_step = sp.pair(half_path, self.weight.half)
        return per_step @ self.time_weights(t_grid)

    def pairing(self, u: TimePath) -> float:
        self._check(u)
        return float(self.pairing_half(u.half, u.t_grid))

    def eval(self, u: TimePath) -> float:
        return float(self.profile.f(self.pairing(u)))

    def d1(self, w: TimePath, y: TimePath) -> float:
        self._check(y)
        return float(self.profile.df(self.pairing(w)) * self.pairing(y))

    def d2(self, w: TimePath, y1: TimePath, y2: TimePath) -> float:
        self._check(y1)
        self._check(y2)
        return float(self.profile.d2f(self.pairing(w)) * self.pairing(y1) * self.pairing(y2))

    def d1_riesz_kernel(self, w: TimePath) -> list[TorusField]:
        """mu(t_n) with DF|_w[y] = sum_n <mu(t_n), y(t_n)>."""
        slope = float(self.profile.df(self.pairing(w)))
        return [self.weight * (slope * wt) for wt in self.time_weights(w.t_grid)]


def constant_observable(c: float, n: int) -> Observable:
    return Observable("endpoint", make_profile("constant", c=c), TorusField.zeros(n))
