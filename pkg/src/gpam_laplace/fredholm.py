"""Carleman-Fredholm determinant and the leading Laplace coefficient a0.

    det2(I + A) = prod_k (1 + lam_k) exp(-lam_k)
    a0          = exp(-(trace_q + lambda) / 2) * det2(I + A)^(-1/2)

Both are accumulated in log space with log1p.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NonDegeneracyViolation


def log_det2(eigs) -> float:
    lam = np.asarray(eigs, dtype=float).ravel()
    if lam.size == 0:
        return 0.0
    worst = float(lam.min())
    if worst <= -1.0:
        raise NonDegeneracyViolation(worst)
    terms = np.log1p(lam) - lam
    # order-independent summation: sort before accumulating
    return float(math.fsum(np.sort(terms)))


def det2(eigs) -> float:
    return math.exp(log_det2(eigs))


def log_a0(trace_q: float, lam: float, eigs) -> float:
    return -0.5 * (trace_q + lam) - 0.5 * log_det2(eigs)


def a0_assemble(trace_q: float, lam: float, eigs) -> float:
    """exp(-(trace_q + lam)/2) * det2(I + A)^(-1/2)."""
    return math.exp(log_a0(trace_q, lam, eigs))


def a0_product_form(mean_q_hat: float, eigs) -> float:
    """exp(-E[Qhat]/2) * [prod (1 + lam_k) exp(-lam_k)]^(-1/2), evaluated directly."""
    lam = np.asarray(eigs, dtype=float).ravel()
    if lam.size and lam.min() <= -1.0:
        raise NonDegeneracyViolation(float(lam.min()))
    prod = float(np.prod((1.0 + lam) * np.exp(-lam))) if lam.size else 1.0
    return math.exp(-0.5 * mean_q_hat) / math.sqrt(prod)


@dataclass
class A0Report:
    trace_q: float
    lam: float
    lam_stderr: float
    eigenvalues: list[float]
    det2: float
    a0: float
    a0_stderr: float
    nondegenerate: bool
    truncation_size: int
    delta: float | None
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, trace_q: float, lam: float, lam_stderr: float, eigs, delta: float | None = None,
              extra: dict | None = None) -> A0Report:
        eigs = [float(x) for x in np.sort(np.asarray(eigs, dtype=float))]
        d2 = det2(eigs)
        a0 = a0_assemble(trace_q, lam, eigs)
        # delta method: d a0 / d lam = -a0 / 2
        return cls(trace_q, lam, lam_stderr, eigs, d2, a0, 0.5 * a0 * lam_stderr, True, len(eigs),
                   delta, dict(extra or {}))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    def table(self) -> str:
        rows = [
            ("trace_q", f"{self.trace_q:.10g}"),
            ("lambda", f"{self.lam:.10g} +- {self.lam_stderr:.3g}"),
            ("det2", f"{self.det2:.10g}"),
            ("min eig", f"{min(self.eigenvalues):.6g}" if self.eigenvalues else "-"),
            ("basis size", str(self.truncation_size)),
            ("delta", "-" if self.delta is None else f"{self.delta:g}"),
            ("a0", f"{self.a0:.10g} +- {self.a0_stderr:.3g}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)
