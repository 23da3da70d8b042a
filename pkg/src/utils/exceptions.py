# src/utils/exceptions.py

class CMPPLabException(Exception):
    """Base exception class for the lab.

    Allows us to catch all our custom exceptions with a single 'except' block.
    """
    def __init__(self, message="A lab-specific error occurred."):
        self.message = message
        super().__init__(self.message)


# --- Expression language ---
class ExpressionError(CMPPLabException):
    """Base class for errors raised while parsing or evaluating formulas."""
    pass

class ExpressionSyntaxError(ExpressionError):
    """Raised for malformed formula text. Carries the byte offset of the problem."""
    def __init__(self, offset: int, detail: str = "unexpected input"):
        self.offset = offset
        super().__init__(f"Syntax error at offset {offset}: {detail}.")

class UnknownIdentifierError(ExpressionError):
    """Raised when a formula mentions a symbol that is neither the variable, a parameter nor a function."""
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"Unknown identifier '{name}' at offset {offset}.")

class UnboundParameterError(ExpressionError):
    """Raised when a declared parameter has no value at evaluation time."""
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Parameter '{name}' has no value.")

class DomainError(ExpressionError):
    """Raised for ln of a nonpositive number, division by zero and similar."""
    def __init__(self, message="Formula evaluated outside its domain."):
        super().__init__(message)


# --- Numerics ---
class DivergentIntegralError(CMPPLabException):
    """Raised when an integral fails the truncation-doubling divergence guard."""
    def __init__(self, message="Integral does not converge."):
        super().__init__(message)

class DivergentMomentError(DivergentIntegralError):
    """Raised when a requested moment is infinite."""
    def __init__(self, k: int, law: str):
        super().__init__(f"Moment of order {k} of {law} diverges.")

class OutsideConvergenceStripError(DivergentIntegralError):
    """Raised when an MGF is requested outside its convergence strip."""
    def __init__(self, s: float, law: str):
        super().__init__(f"MGF of {law} is infinite at s={s!r}.")

class TiltNormalizationError(CMPPLabException):
    """Raised when a tilting weight does not integrate to one against its base law."""
    def __init__(self, norm: float):
        self.norm = norm
        super().__init__(f"Tilting weight integrates to {norm!r}, expected 1.")


# --- Models ---
class InadmissibleModelError(CMPPLabException):
    """Raised when a base model violates its structural requirements."""
    def __init__(self, message="The base model is not admissible."):
        super().__init__(message)

class NotValidatedError(CMPPLabException):
    """Raised when a measure change is used before passing validation."""
    def __init__(self, message="The measure change has not passed validation at the requested level."):
        super().__init__(message)


# --- Simulation and premiums ---
class OutOfHorizonError(CMPPLabException):
    """Raised when a path is queried beyond its simulated horizon."""
    def __init__(self, t: float, horizon: float):
        super().__init__(f"Time {t!r} lies beyond the path horizon {horizon!r}.")

class ExplosionError(CMPPLabException):
    """Raised when a path accumulates more events than the hard cap allows."""
    def __init__(self, cap: int):
        super().__init__(f"Path exceeded {cap} events before reaching the horizon.")

class BadIntervalError(CMPPLabException):
    """Raised for time intervals that do not satisfy 0 <= start <= end (strict for increments)."""
    def __init__(self, start: float, end: float):
        self.start, self.end = start, end
        super().__init__(f"Bad time interval: start={start!r}, end={end!r}.")

class AssumptionViolatedError(CMPPLabException):
    """Raised when a closed form is requested outside its stated assumptions."""
    def __init__(self, message="A stated assumption of the closed form does not hold."):
        super().__init__(message)


# --- Scenarios and reports ---
class ScenarioError(CMPPLabException):
    """Base class for scenario loading problems (exit code 2)."""
    pass

class ScenarioNotFoundError(ScenarioError):
    """Raised when neither a file nor a builtin scenario matches the name."""
    def __init__(self, identifier: str):
        super().__init__(f"Could not find scenario: {identifier}.")

class ScenarioParseError(ScenarioError):
    """Raised for malformed or invalid scenario files, with the offending line when known."""
    def __init__(self, detail: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"Invalid scenario, {where}{detail}")

class ReportWriteError(CMPPLabException):
    """Raised when a report cannot be written to its destination."""
    def __init__(self, destination: str, detail: str):
        super().__init__(f"Could not write report to {destination}: {detail}")

class InsufficientPathsError(CMPPLabException):
    """Raised when a Monte Carlo estimate is requested with too few paths."""
    def __init__(self, n: int, minimum: int):
        super().__init__(f"Need at least {minimum} paths, got {n}.")

class InvalidEventError(CMPPLabException):
    """Raised when a conditioning event is not observable at the earlier time of its pair."""
    def __init__(self, event: str, s: float):
        super().__init__(f"Event {event} is not determined by time {s!r}.")
