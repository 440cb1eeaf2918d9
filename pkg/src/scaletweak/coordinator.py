"""Coordinator for tweaking tools.

Tools never touch the dataset directly: they propose modification batches, the
coordinator simulates each batch against the incremental trackers of every
previously completed tool still under validation, and accepts only if all
simulated feature errors stay within e_threshold. Accepted verdicts are
applied atomically, journaled, and broadcast to all tracking tools.

When a tool cannot get any candidate accepted it may ask for relaxation: the
earliest-completed feature drops out of the validation set (bounded by
max_relaxation_rounds per run). Rejected proposals and trial simulations are
rolled back exactly, so the dataset and every tracker only ever advance by
accepted batches.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, replace

from .dataset import Dataset
from .errors import (
    ConservationViolation,
    CoordinatorExhausted,
    DuplicateToolName,
    InfeasibleRepair,
    MalformedModification,
    NotCurrentTool,
    PendingEmptyCells,
    StaleVerdict,
    TargetInfeasible,
)
from .modify import (
    AppendTuple,
    Undo,
    apply_modification,
    apply_undo,
    cell_delta,
    encode_journal_record,
)

_ERROR_SLACK = 1e-12  # guards threshold comparison against float dust


@dataclass(frozen=True)
class Violation:
    """One necessity-condition failure in a feature target."""

    condition: str  # e.g. "L1", "C2", "P1", "shape"
    location: tuple
    message: str


@dataclass(frozen=True)
class ChangeEvent:
    """Normalized effect of one applied modification on one table.

    cells: (pk, col_index, old, new) in application order.
    appended / removed: (pk, full data-row values).
    """

    table: str
    cells: tuple = ()
    appended: tuple = ()
    removed: tuple = ()

    def inverse(self) -> ChangeEvent:
        return ChangeEvent(
            table=self.table,
            cells=tuple((pk, ci, new, old) for pk, ci, old, new in reversed(self.cells)),
            appended=self.removed,
            removed=self.appended,
        )


class TweakingTool(abc.ABC):
    """Contract every tweaking tool implements.

    A tool bundles feature calculation, target generation and repair, the
    tweaking algorithm itself, and an incremental tracker that the coordinator
    drives through notify_change to validate and report errors cheaply.
    """

    name: str

    @abc.abstractmethod
    def calculate(self, dataset: Dataset):
        """Compute the feature of `dataset` from scratch."""

    @abc.abstractmethod
    def generate_target(self, dataset: Dataset, new_sizes: dict[str, int]):
        """Scale the dataset's own feature to new table sizes and repair it."""

    @abc.abstractmethod
    def check_target(self, target, sizes: dict[str, int]) -> list[Violation]:
        """Necessity conditions for `target` under the given table sizes."""

    @abc.abstractmethod
    def repair_target(self, target, sizes: dict[str, int]):
        """Minimally adjusted target passing check_target; idempotent."""

    @abc.abstractmethod
    def begin_tracking(self, dataset: Dataset, target) -> None:
        """(Re)build incremental state for `dataset` against `target`."""

    @abc.abstractmethod
    def notify_change(self, dataset: Dataset, event: ChangeEvent) -> None:
        """Fold one applied change into the incremental state."""

    @abc.abstractmethod
    def current_error(self) -> float:
        """Feature error of the tracked dataset against the tracked target."""

    @abc.abstractmethod
    def tweak(self, dataset: Dataset, target, session: "Coordinator") -> None:
        """Drive the dataset toward `target` through session proposals."""

    def verify_tracking(self, dataset: Dataset) -> None:
        """Debug hook: assert incremental state equals recomputation."""


@dataclass
class CoordinatorConfig:
    e_threshold: float = 0.05
    max_relaxation_rounds: int = 8
    relaxation_order: str = "earliest"  # "latest" exists for experiments only
    crosscheck: bool = False  # recompute features after every applied batch


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    errors: dict
    version: int
    mods: tuple
    rejecting: tuple[str, ...] = ()


@dataclass
class ToolRunSummary:
    tool: str
    target_repaired: bool
    validated_against: tuple[str, ...]
    proposed: int = 0
    accepted: int = 0
    rejected: int = 0
    ops_applied: int = 0
    cells_deleted: int = 0
    cells_inserted: int = 0
    tuples_appended: int = 0
    relaxed: tuple[str, ...] = ()
    final_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "targetRepaired": self.target_repaired,
            "validatedAgainst": list(self.validated_against),
            "proposed": self.proposed,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "opsApplied": self.ops_applied,
            "cellsDeleted": self.cells_deleted,
            "cellsInserted": self.cells_inserted,
            "tuplesAppended": self.tuples_appended,
            "relaxed": list(self.relaxed),
            "finalError": self.final_error,
        }


class Coordinator:
    def __init__(self, config: CoordinatorConfig | None = None):
        self.config = config or CoordinatorConfig()
        self._tools: list[TweakingTool] = []
        self._names: set[str] = set()
        self._dataset: Dataset | None = None
        self._completed: list[str] = []  # first-completion order
        self._tracking: dict[str, TweakingTool] = {}
        self._current: str | None = None
        self._run: ToolRunSummary | None = None
        self._relaxed: list[str] = []
        self.journal: list[dict] = []
        self._step = 0
        self.access_sets: dict[str, set[tuple[str, int]]] = {}

    # --- registration ------------------------------------------------------

    def register(self, tool: TweakingTool) -> int:
        if tool.name in self._names:
            raise DuplicateToolName(f"tool {tool.name!r} already registered")
        self._names.add(tool.name)
        self._tools.append(tool)
        return len(self._tools) - 1

    def tool(self, handle: int) -> TweakingTool:
        return self._tools[handle]

    # --- run lifecycle -----------------------------------------------------

    def run_tool(
        self, handle: int, target, dataset: Dataset, repair: bool = True
    ) -> ToolRunSummary:
        tool = self._tools[handle]
        if self._current is not None:
            raise NotCurrentTool(f"tool {self._current!r} is still running")
        if self._dataset is None:
            self._dataset = dataset
        elif self._dataset is not dataset:
            raise MalformedModification("coordinator is bound to a different dataset")

        sizes = dataset.sizes()
        repaired = False
        violations = tool.check_target(target, sizes)
        if violations:
            if not repair:
                raise TargetInfeasible(
                    f"{tool.name}: target fails necessity: "
                    + "; ".join(v.message for v in violations[:5])
                )
            target = tool.repair_target(target, sizes)
            repaired = True
            leftovers = tool.check_target(target, sizes)
            if leftovers:
                raise InfeasibleRepair(
                    f"{tool.name}: repair left violations: "
                    + "; ".join(v.message for v in leftovers[:5])
                )

        tool.begin_tracking(dataset, target)
        self._tracking[tool.name] = tool
        self.access_sets.setdefault(tool.name, set())
        self._relaxed = []
        self._run = ToolRunSummary(
            tool=tool.name,
            target_repaired=repaired,
            validated_against=tuple(self._validation_names(tool.name)),
        )
        self._current = tool.name
        try:
            tool.tweak(dataset, target, self)
        finally:
            self._current = None
        run = self._run
        self._run = None
        if run.cells_deleted != run.cells_inserted:
            raise ConservationViolation(
                f"{tool.name}: deleted {run.cells_deleted} cells but inserted "
                f"{run.cells_inserted}"
            )
        if dataset.empty_cell_count() != 0:
            raise PendingEmptyCells(
                f"{tool.name}: {dataset.empty_cell_count()} Empty cells at run end"
            )
        if tool.name not in self._completed:
            self._completed.append(tool.name)
        run.relaxed = tuple(self._relaxed)
        run.final_error = tool.current_error()
        return run

    def _validation_names(self, current: str) -> list[str]:
        return [
            n
            for n in self._completed
            if n != current and n not in self._relaxed and n in self._tracking
        ]

    def _validation_tools(self) -> list[TweakingTool]:
        assert self._current is not None
        return [self._tracking[n] for n in self._validation_names(self._current)]

    def _require_current(self, tool_name: str) -> None:
        if self._current is None or tool_name != self._current:
            raise NotCurrentTool(
                f"{tool_name!r} proposed but current tool is {self._current!r}"
            )

    # --- propose / apply ---------------------------------------------------

    def propose(self, tool_name: str, mods) -> Verdict:
        self._require_current(tool_name)
        assert self._dataset is not None
        mods = tuple(mods)
        if not mods:
            raise MalformedModification("empty proposal")
        if self._run is not None:
            self._run.proposed += 1
        validators = self._validation_tools()
        dataset = self._dataset

        undos: list[tuple[Undo, ChangeEvent]] = []
        try:
            for m in mods:
                realized, undo, event = self._apply_one(m)
                undos.append((undo, event))
                for t in validators:
                    t.notify_change(dataset, event)
        except MalformedModification:
            self._rollback(undos, validators)
            raise

        errors = {t.name: t.current_error() for t in validators}
        rejecting = tuple(
            sorted(
                n
                for n, e in errors.items()
                if e > self.config.e_threshold + _ERROR_SLACK
            )
        )
        self._rollback(undos, validators)
        accepted = not rejecting
        if self._run is not None and not accepted:
            self._run.rejected += 1
        return Verdict(
            accepted=accepted,
            errors=errors,
            version=dataset.version,
            mods=mods,
            rejecting=rejecting,
        )

    def _rollback(self, undos, validators) -> None:
        dataset = self._dataset
        for undo, event in reversed(undos):
            apply_undo(dataset, undo)
            inv = event.inverse()
            for t in validators:
                t.notify_change(dataset, inv)

    def apply(self, tool_name: str, verdict: Verdict) -> None:
        self._require_current(tool_name)
        assert self._dataset is not None
        dataset = self._dataset
        if not verdict.accepted:
            raise MalformedModification("cannot apply a rejected verdict")
        if verdict.version != dataset.version:
            raise StaleVerdict(
                f"verdict from version {verdict.version}, dataset at {dataset.version}"
            )
        run = self._run
        touched = self.access_sets.setdefault(tool_name, set())
        trackers = list(self._tracking.values())
        for m in verdict.mods:
            realized, undo, event = self._apply_one(m)
            self.journal.append(
                encode_journal_record(realized, tool_name, self._step)
            )
            self._step += 1
            d, i = cell_delta(realized)
            if run is not None:
                run.ops_applied += 1
                run.cells_deleted += d
                run.cells_inserted += i
            for pk, _ci, _old, _new in event.cells:
                touched.add((event.table, pk))
            for pk, _values in event.appended:
                touched.add((event.table, pk))
                if run is not None:
                    run.tuples_appended += 1
            for t in trackers:
                t.notify_change(dataset, event)
        dataset.version += 1
        if run is not None:
            run.accepted += 1
        if self.config.crosscheck:
            for t in trackers:
                t.verify_tracking(dataset)

    def submit(self, tool_name: str, mods) -> Verdict:
        """Propose and, when accepted, immediately apply. Returns the verdict."""
        verdict = self.propose(tool_name, mods)
        if verdict.accepted:
            self.apply(tool_name, verdict)
        return verdict

    def _apply_one(self, mod):
        dataset = self._dataset
        realized = mod
        if isinstance(mod, AppendTuple) and mod.pk is None:
            realized = replace(mod, pk=dataset.tables[mod.table].next_pk())
        undo = apply_modification(dataset, realized)
        event = self._event_for(realized, undo)
        return realized, undo, event

    def _event_for(self, mod, undo: Undo) -> ChangeEvent:
        dataset = self._dataset
        if undo.kind == "cells":
            table = dataset.tables[mod.table]
            cells = tuple(
                (pk, ci, old, table.rows[pk][ci]) for pk, ci, old in undo.cells
            )
            return ChangeEvent(table=mod.table, cells=cells)
        if undo.kind == "append":
            values = tuple(dataset.tables[mod.table].rows[undo.pk])
            return ChangeEvent(table=mod.table, appended=((undo.pk, values),))
        if undo.kind == "remove":
            return ChangeEvent(table=mod.table, removed=((undo.pk, undo.cells),))
        raise MalformedModification(f"unknown undo kind {undo.kind!r}")

    # --- relaxation --------------------------------------------------------

    def request_relaxation(self, tool_name: str) -> str | None:
        """Drop one feature from the validation set; None when exhausted."""
        self._require_current(tool_name)
        if len(self._relaxed) >= self.config.max_relaxation_rounds:
            return None
        candidates = self._validation_names(tool_name)
        if not candidates:
            return None
        victim = (
            candidates[0]
            if self.config.relaxation_order == "earliest"
            else candidates[-1]
        )
        self._relaxed.append(victim)
        return victim

    def exhausted(self, tool_name: str, context: str) -> CoordinatorExhausted:
        """Build the error a tool raises when out of candidates and relaxations."""
        return CoordinatorExhausted(
            f"{tool_name}: no acceptable modification ({context}); "
            f"relaxed={self._relaxed}"
        )

    # --- reporting ---------------------------------------------------------

    @property
    def completed(self) -> tuple[str, ...]:
        return tuple(self._completed)

    def tracked_error(self, name: str) -> float:
        return self._tracking[name].current_error()
