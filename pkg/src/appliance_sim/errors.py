"""Exception hierarchy shared by every module of the package."""


class ApplianceSimError(Exception):
    """Base class for all errors raised by appliance_sim."""


# --- spec loading -------------------------------------------------------------


class SpecError(ApplianceSimError, ValueError):
    """A spec document could not be turned into an ApplianceSpec."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.detail = message


class SpecSyntaxError(SpecError):
    """Malformed JSON; carries the 1-based line and column of the problem."""

    def __init__(self, message, lineno, colno):
        super().__init__(f"{message} (line {lineno}, column {colno})")
        self.lineno = lineno
        self.colno = colno


class UnknownField(SpecError):
    pass


class MissingField(SpecError):
    pass


class DuplicateName(SpecError):
    pass


class UnresolvedReference(UnknownField):
    """A rule, mechanism or effect names a part/parameter that was never declared."""


class InvalidValue(SpecError):
    pass


class InvalidSpec(ApplianceSimError):
    """Raised when an operation needs a spec that passes validate_spec."""

    def __init__(self, findings):
        self.findings = list(findings)
        lines = "; ".join(f"{f.path}: {f.message}" for f in self.findings[:5])
        super().__init__(f"spec failed validation: {lines}")


class StateSpaceExceeded(ApplianceSimError):
    pass


class DegenerateBox(ApplianceSimError, ValueError):
    pass


# --- mechanisms / execution ---------------------------------------------------


class ExecutorError(ApplianceSimError):
    """An atomic action was rejected. ``code`` is the failure-taxonomy name."""

    code = "ExecutorError"


class UnknownPart(ExecutorError):
    code = "UnknownPart"


class IncompatibleAction(ExecutorError):
    code = "IncompatibleAction"


class GuardViolation(ExecutorError):
    code = "GuardViolation"


class ParameterOutOfRange(ExecutorError):
    code = "ParameterOutOfRange"


class ObjectHandError(ExecutorError):
    code = "ObjectHandError"


class CascadeLimitExceeded(ApplianceSimError):
    pass


class RuleOscillation(ApplianceSimError):
    """The logic-rule fixpoint did not settle within the sweep cap."""


class InvalidEffect(ApplianceSimError, ValueError):
    pass


class SchemaMismatch(ApplianceSimError, ValueError):
    pass


# --- action language ----------------------------------------------------------


class ActionParseError(ApplianceSimError, ValueError):
    code = "ActionParseError"


class ActionSyntaxError(ActionParseError):
    code = "ActionSyntaxError"


class UnknownActionKind(ActionParseError):
    code = "UnknownActionKind"


class ArityError(ActionParseError):
    code = "ArityError"


class ArgTypeError(ActionParseError):
    code = "ArgTypeError"


class PlanParseError(ActionParseError):
    """Collects per-line failures; ``errors`` is a list of (line_no, ActionParseError)."""

    code = "PlanParseError"

    def __init__(self, errors):
        self.errors = list(errors)
        msg = "; ".join(f"line {n}: {e}" for n, e in self.errors)
        super().__init__(msg)


# --- benchmark ----------------------------------------------------------------


class UnreachableGoal(ApplianceSimError):
    pass


class PageOutOfRange(ApplianceSimError, ValueError):
    pass


class PlannerError(ApplianceSimError):
    """Infrastructure-level planner failure (scored as zero, tallied separately)."""

    code = "PlannerError"


class PlannerTimeout(PlannerError):
    code = "PlannerTimeout"


class MalformedResponse(PlannerError):
    code = "MalformedResponse"


class PlannerUnavailable(PlannerError):
    """The planner process could not be spawned or the endpoint not reached."""

    code = "PlannerUnavailable"


class MixedTask(ApplianceSimError, ValueError):
    pass


class EmptyInput(MixedTask):
    pass


class EpisodeError(ApplianceSimError, ValueError):
    pass
