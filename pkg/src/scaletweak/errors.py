"""Exception hierarchy for the scaletweak toolkit.

Every failure mode that callers are expected to handle has its own class so the
CLI can map them onto exit codes without string matching.
"""

from __future__ import annotations


class ScaletweakError(Exception):
    """Base class for all toolkit errors."""


# --- configuration / input problems ---------------------------------------


class SchemaParseError(ScaletweakError):
    """Schema JSON is malformed or internally inconsistent."""


class CyclicSchema(SchemaParseError):
    """Reference graph contains a cycle (self references included)."""


class MissingTableFile(ScaletweakError):
    """A table declared in the schema has no CSV file in the data directory."""


class DuplicatePrimaryKey(ScaletweakError):
    """Two rows of one table share a primary key value."""


class DanglingForeignKey(ScaletweakError):
    """A foreign key cell references a primary key that does not exist."""


class IoFailure(ScaletweakError):
    """Filesystem level failure while reading or writing dataset files."""


class PendingEmptyCells(ScaletweakError):
    """Dataset still holds Empty cells and cannot be serialized."""


class InfeasibleTarget(ScaletweakError):
    """Size target violates referential preconditions."""


class TargetInfeasible(ScaletweakError):
    """Feature target fails its necessity check and repair was declined."""


class InfeasibleRepair(ScaletweakError):
    """No repaired target exists for the given table sizes."""


class ShapeMismatch(ScaletweakError):
    """Feature target does not match the schema-derived shape."""


class GroupMismatch(ShapeMismatch):
    """Coappear target group does not exist in the schema."""


class BindingMismatch(ShapeMismatch):
    """Pairwise target binding does not exist in the schema."""


# --- coordinator protocol problems ----------------------------------------


class MalformedModification(ScaletweakError):
    """Modification violates cell-state rules (see modify module)."""


class DuplicateToolName(ScaletweakError):
    """Two registered tools share a name."""


class NotCurrentTool(ScaletweakError):
    """A tool other than the active one tried to propose or apply."""


class StaleVerdict(ScaletweakError):
    """A verdict token from an older dataset version was replayed."""


class CoordinatorExhausted(ScaletweakError):
    """All candidate modifications rejected and relaxation rounds spent."""


class ConservationViolation(ScaletweakError):
    """A tool run deleted and inserted different numbers of cells."""


class GraphTooLarge(ScaletweakError):
    """Overlap graph exceeds the exact independent-set solver limit."""


# --- measurement problems --------------------------------------------------


class ZeroTruth(ScaletweakError):
    """Query error undefined because the ground-truth value is zero."""


class SpecMismatch(ScaletweakError):
    """Query spec references tables or columns absent from the schema."""
