"""
Exceptions for barrier-stl.

Every error raised by the library derives from ``BarrierStlError`` and
carries the process exit code the CLI reports for it:

- 2: user errors (bad formula, bad config, bad input files)
- 3: infeasibility (the construction's assumptions do not hold)
- 4: internal invariant failures
"""

from typing import Any


class BarrierStlError(Exception):
    """Base class for all library errors."""

    exit_code: int = 4
    kind: str = "internal_error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        """Serialize for API error bodies and run manifests."""
        return {"error": self.kind, "message": self.message, "details": self.details}


# ============================================================================
# User errors
# ============================================================================


class UserError(BarrierStlError):
    """Input supplied by the user is invalid."""

    exit_code = 2
    kind = "user_error"


class FormulaSyntaxError(UserError):
    """Formula text does not follow the grammar."""

    kind = "formula_syntax"

    def __init__(self, message: str, text: str, position: int) -> None:
        pointer = " " * position + "^"
        super().__init__(f"{message} at position {position}\n  {text}\n  {pointer}", position=position)
        self.position = position


class FragmentViolationError(UserError):
    """Formula parses but leaves the supported STL fragment."""

    kind = "fragment_violation"


class UnknownIdentifierError(UserError):
    """Predicate identifier is not declared in the shape table."""

    kind = "unknown_identifier"


class ConfigValidationError(UserError):
    """Scenario or settings file failed validation."""

    kind = "config_validation"


class TrajectoryTooShortError(UserError):
    """Trajectory does not cover the formula horizon."""

    kind = "trajectory_too_short"


class TrajectoryFormatError(UserError):
    """Trajectory file is malformed."""

    kind = "trajectory_format"


class CheckpointMismatchError(UserError):
    """Checkpoint was produced for a different scenario or mode."""

    kind = "checkpoint_mismatch"


class UnsupportedShapeError(UserError):
    """A predicate asks for something its shape cannot provide (sup h or pair bounds on a non-circle)."""

    kind = "unsupported_shape"


# ============================================================================
# Infeasibility
# ============================================================================


class InfeasibilityError(BarrierStlError):
    """The barrier construction cannot be realized for this input."""

    exit_code = 3
    kind = "infeasible"


class CategoryInfeasibleError(InfeasibilityError):
    """An always-wrapped predicate starting at 0 is violated at x0."""

    kind = "category_infeasible"


class CategoryMismatchError(InfeasibilityError):
    """Sampled x0 yields predicate categories different from the declared ones."""

    kind = "category_mismatch"


class LedgerInfeasibleError(InfeasibilityError):
    """A γ interval of the ledger is empty."""

    kind = "ledger_infeasible"


class QpInfeasibleError(InfeasibilityError):
    """Constraint rows of the QP admit no solution."""

    kind = "qp_infeasible"

    def __init__(self, message: str, row: int, violation: float, step: int | None = None) -> None:
        super().__init__(message, row=row, violation=violation, step=step)
        self.row = row
        self.violation = violation
        self.step = step

    def at_step(self, step: int) -> "QpInfeasibleError":
        """Return a copy tagged with the rollout step index."""
        return QpInfeasibleError(f"step {step}: {self.message}", self.row, self.violation, step)


# ============================================================================
# Internal invariants
# ============================================================================


class InvariantError(BarrierStlError):
    """An internal invariant was broken."""

    exit_code = 4
    kind = "invariant_failure"


class AutodiffDomainError(InvariantError):
    """Primitive evaluated outside its domain."""

    kind = "autodiff_domain"


class TapeMismatchError(InvariantError):
    """Operands or root belong to another tape."""

    kind = "tape_mismatch"


class KktDegeneracyError(InvariantError):
    """KKT system of the active set is singular."""

    kind = "kkt_degenerate"


class NonFiniteGradientError(InvariantError):
    """Gradient contains NaN or infinity."""

    kind = "non_finite_gradient"


class ConstructionCheckError(InvariantError):
    """Squashed HOCBF parameters violate the construction (ψ chain or ledger)."""

    kind = "construction_check"


class QpInputError(InvariantError):
    """QP data violates its invariants (Q not symmetric positive definite, shapes)."""

    kind = "qp_input"


class UnsupportedRelativeDegreeError(InvariantError):
    """HOCBF relative degree outside {1, 2}."""

    kind = "unsupported_relative_degree"
