"""Exception types raised across the package."""

from __future__ import annotations


class DiracInvError(Exception):
    """Base class for all package errors."""


class DomainError(DiracInvError, ValueError):
    """An argument lies outside the domain of a map."""


class SpectrumError(DiracInvError, ValueError):
    """Spectral data fails validation."""


class IntegrationError(DiracInvError, ArithmeticError):
    """The ODE integrator produced non-finite values or could not step."""

    def __init__(self, message: str, x: float | None = None):
        super().__init__(message if x is None else f"{message} (x = {x:.17g})")
        self.x = x


class MissedRoot(DiracInvError, ArithmeticError):
    """No sign change of the characteristic function was found for index ``n``."""

    def __init__(self, n: int, detail: str = ""):
        msg = f"no eigenvalue located for index n = {n}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.n = n


class DegenerateEigenfunction(DiracInvError, ArithmeticError):
    """psi(., lambda_n) is not proportional to phi(., lambda_n) at x = 0."""

    def __init__(self, lam: float, psi1: float):
        super().__init__(f"|psi_1(0)| = {abs(psi1):.3e} at lambda = {lam:.17g}")
        self.lam = lam
        self.psi1 = psi1


class SingularSystem(DiracInvError, ArithmeticError):
    """The discretized main equation is numerically singular."""

    def __init__(self, x: float, detail: str = ""):
        msg = f"singular main-equation system at x = {x:.17g}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.x = x


class DegenerateSystem(DiracInvError, ArithmeticError):
    """A least-squares problem has a rank-deficient normal matrix."""


class ZeroFunction(DiracInvError, ValueError):
    """A test function has zero weighted norm."""


class ConfigError(DiracInvError, ValueError):
    """A run configuration is invalid."""
