class DataShowerError(Exception):
    """Base class for every error raised by data_shower."""


class DomainError(DataShowerError, ValueError):
    """An argument lies outside the numeric domain an operation is defined on."""


class ExtrapolationError(DomainError):
    """A tabulated quantity was requested outside its sampled span."""


class TraceLoadError(DataShowerError, ValueError):
    """A trace, absorption, scripted-loss or instance file could not be parsed."""

    def __init__(self, message: str, path: str, line: int | None = None) -> None:
        self.path = path  # offending file
        self.line = line  # 1-based line number, header included
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


class ScenarioError(DataShowerError, ValueError):
    """A scenario file failed to parse or violates one or more invariants."""

    def __init__(self, message: str, diagnostics: list[str] | None = None) -> None:
        self.diagnostics = diagnostics or []
        details = "".join(f"\n  - {d}" for d in self.diagnostics)
        super().__init__(f"{message}{details}")


class BudgetExceededError(DataShowerError, RuntimeError):
    """The exhaustive scheduler was asked to enumerate more assignments than allowed."""

    def __init__(self, n_assignments: float, budget: float) -> None:
        self.n_assignments = n_assignments
        self.budget = budget
        super().__init__(f"exhaustive search needs {n_assignments:.3g} assignments, above the budget of {budget:.3g}")
