"""Exception hierarchy; the CLI maps each family to an exit code."""


class CableNmpcError(Exception):
    pass


class ConfigError(CableNmpcError, ValueError):
    """Invalid scenario or configuration.  Carries every violated invariant."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class GeometryError(CableNmpcError, ValueError):
    """Degenerate attachment geometry (rank-deficient distribution matrix)."""


class TensionFloorError(CableNmpcError, ValueError):
    """Cable tension too small to define a cable direction."""


class SolverError(CableNmpcError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class PhysicsError(CableNmpcError, RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class TautViolation(PhysicsError):
    """Cable length constraint broken (slack or overstretched cable)."""
