"""Exception types shared across the package.

Plain ``ValueError`` is raised for ordinary bad arguments; the classes here
mark failure modes that callers (in particular the CLI) dispatch on.
"""


class SimulationDivergedError(RuntimeError):
    """A simulated state became non-finite during forward integration."""

    def __init__(self, path: int, step: int, label: str = "state"):
        self.path = path
        self.step = step
        self.label = label
        super().__init__(
            f"simulation diverged: non-finite {label} on path {path} at step {step}"
        )


class RiccatiBlowUpError(RuntimeError):
    """A backward coefficient trajectory exceeded the blow-up bound."""

    def __init__(self, t: float, bound: float):
        self.t = t
        self.bound = bound
        super().__init__(
            f"coefficient system blew up (|coefficient| > {bound:g}) "
            f"near t = {t:.6g}"
        )


class DegenerateMultiplierError(ValueError):
    """lambda_P fell below the admissible floor; the cash-flow map divides by it."""


class DegenerateSensitivityError(ValueError):
    """Effort sensitivity f_e is numerically zero; the first-order condition divides by it."""


class ConfigError(ValueError):
    """A run configuration file or override is malformed."""
