"""
Module: Errors
Description: Exception hierarchy shared by the library and the CLI.
             Each class carries the process exit code the CLI reports.
"""


class CarlemanError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 3

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{key}={value}" for key, value in sorted(self.diagnostics.items()))
        return f"{base} ({details})"


class MaterialError(CarlemanError):
    """Inadmissible or degenerate medium."""


class SingularityError(CarlemanError):
    """Evaluation at a kernel singularity (r = 0 or the branch point tau = k)."""


class GeometryError(CarlemanError):
    """Invalid surface description: non-unit normals, resolution, mesh file."""


class QuadratureFailure(CarlemanError):
    """A quadrature or series did not reach its tolerance."""


class OverflowGuard(CarlemanError):
    """Mittag-Leffler argument too large inside the growth sector."""


class ConfigError(CarlemanError):
    """Experiment configuration failed validation."""

    exit_code = 1

    def __init__(self, message: str, path: str = "", **diagnostics):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message, **diagnostics)


class SelftestFailure(CarlemanError):
    """At least one selftest check exceeded its tolerance."""

    exit_code = 2


class AuditError(CarlemanError):
    """Not enough sweep points to fit slopes or exponents."""

    exit_code = 4
