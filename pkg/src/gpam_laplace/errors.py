class HypothesisViolation(Exception):
    """A numerical hypothesis of the expansion failed (CLI exit code 3)."""


class PicardDivergence(HypothesisViolation):
    """Time march left the bounded regime; shrink T or the step size."""


class NonDegeneracyViolation(HypothesisViolation):
    """An eigenvalue of A is <= -1, so D^2 of the phase functional is not positive."""

    def __init__(self, eigenvalue: float):
        super().__init__(f"eigenvalue {eigenvalue:.6g} <= -1: minimiser is degenerate")
        self.eigenvalue = eigenvalue


class MollifierTooWide(ValueError):
    """Mollifier multiplier has not decayed at the grid's Nyquist shell."""


class DegenerateFit(ValueError):
    """Too few populated spectral shells for a power-law fit."""


class BasisTooLarge(ValueError):
    """Requested more basis functions than the grid resolves."""


class NotSymmetric(ValueError):
    """Matrix handed to the symmetric eigensolver is not symmetric."""
