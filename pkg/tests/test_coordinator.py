"""Coordinator protocol: propose/apply, validation, relaxation, accounting."""

import pytest

from conftest import linear_figure_dataset
from scaletweak import (
    AppendTuple,
    Coordinator,
    CoordinatorConfig,
    DeleteValues,
    InsertValues,
    ReplaceValues,
)
from scaletweak.coordinator import TweakingTool, Violation
from scaletweak.dataset import EMPTY, datasets_equal
from scaletweak.errors import (
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


class ScriptedTool(TweakingTool):
    """Test double: fixed error value, event log, optional tweak script."""

    def __init__(self, name, script=None, violations=()):
        self.name = name
        self.error = 0.0
        self.next_error = None  # picked up on the next notification
        self.script = script
        self.violations = list(violations)
        self.events = []
        self.verified = 0
        self.repairs = 0

    def calculate(self, dataset):
        return None

    def generate_target(self, dataset, new_sizes):
        return None

    def check_target(self, target, sizes):
        return list(self.violations)

    def repair_target(self, target, sizes):
        self.repairs += 1
        return target

    def begin_tracking(self, dataset, target):
        self.events = []

    def notify_change(self, dataset, event):
        self.events.append(event)
        if self.next_error is not None:
            self.error = self.next_error

    def current_error(self):
        return self.error

    def tweak(self, dataset, target, session):
        if self.script:
            self.script(dataset, session)

    def verify_tracking(self, dataset):
        self.verified += 1


def replace_b1(value=2):
    return ReplaceValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(value,))


def run_noop(coordinator, tool, dataset):
    handle = coordinator.register(tool)
    return coordinator.run_tool(handle, None, dataset)


def test_duplicate_tool_name_rejected():
    coordinator = Coordinator()
    coordinator.register(ScriptedTool("a"))
    with pytest.raises(DuplicateToolName):
        coordinator.register(ScriptedTool("a"))


def test_propose_outside_run_rejected():
    coordinator = Coordinator()
    coordinator.register(ScriptedTool("a"))
    with pytest.raises(NotCurrentTool):
        coordinator.propose("a", [replace_b1()])


def test_propose_always_rolls_back():
    ds = linear_figure_dataset()
    before = ds.clone()
    verdicts = []

    def script(dataset, session):
        verdicts.append(session.propose("b", [replace_b1()]))
        assert dataset.tables["B"].rows[1] == [1]  # rolled back already

    coordinator = Coordinator()
    run_noop(coordinator, ScriptedTool("b", script=script), ds)
    assert verdicts[0].accepted
    assert datasets_equal(ds, before)
    assert ds.version == 0
    assert coordinator.journal == []


def test_empty_proposal_rejected():
    ds = linear_figure_dataset()

    def script(dataset, session):
        with pytest.raises(MalformedModification):
            session.propose("b", [])

    run_noop(Coordinator(), ScriptedTool("b", script=script), ds)


def test_apply_replays_and_journals():
    ds = linear_figure_dataset()

    def script(dataset, session):
        verdict = session.propose("b", [replace_b1(), AppendTuple(table="B", values=(3,))])
        session.apply("b", verdict)

    coordinator = Coordinator()
    summary = run_noop(coordinator, ScriptedTool("b", script=script), ds)
    assert ds.tables["B"].rows[1] == [2]
    assert ds.tables["B"].rows[6] == [3]
    assert ds.version == 1
    assert [r["op"] for r in coordinator.journal] == ["replaceValues", "appendTuple"]
    assert coordinator.journal[1]["tupleIDs"] == [6]  # realized pk journaled
    assert [r["step"] for r in coordinator.journal] == [0, 1]
    assert coordinator.access_sets["b"] == {("B", 1), ("B", 6)}
    assert summary.ops_applied == 2
    assert summary.tuples_appended == 1
    assert summary.accepted == 1


def test_validators_are_prior_completions_only():
    ds = linear_figure_dataset()
    a = ScriptedTool("a")
    c = ScriptedTool("c")  # registered but never run

    def script(dataset, session):
        session.submit("b", [replace_b1()])

    coordinator = Coordinator()
    run_noop(coordinator, a, ds)
    coordinator.register(c)
    b = ScriptedTool("b", script=script)
    summary = run_noop(coordinator, b, ds)
    assert summary.validated_against == ("a",)
    # a saw the trial, its rollback inverse, then the definitive replay
    assert len(a.events) == 3
    assert c.events == []


def test_threshold_respects_slack():
    ds = linear_figure_dataset()
    a = ScriptedTool("a")
    outcomes = []

    def script(dataset, session):
        a.next_error = 0.05 + 1e-13  # inside the comparison slack
        outcomes.append(session.propose("b", [replace_b1()]).accepted)
        a.next_error = 0.06
        verdict = session.propose("b", [replace_b1()])
        outcomes.append(verdict.accepted)
        outcomes.append(verdict.rejecting)

    coordinator = Coordinator(CoordinatorConfig(e_threshold=0.05))
    run_noop(coordinator, a, ds)
    summary = run_noop(coordinator, ScriptedTool("b", script=script), ds)
    assert outcomes == [True, False, ("a",)]
    assert summary.proposed == 2
    assert summary.rejected == 1


def test_rejected_proposal_sends_inverse_events():
    ds = linear_figure_dataset()
    a = ScriptedTool("a")

    def script(dataset, session):
        a.next_error = 1.0
        assert not session.propose("b", [replace_b1()]).accepted

    coordinator = Coordinator()
    run_noop(coordinator, a, ds)
    run_noop(coordinator, ScriptedTool("b", script=script), ds)
    trial, inverse = a.events
    assert trial.cells == ((1, 0, 1, 2),)
    assert inverse.cells == ((1, 0, 2, 1),)


def test_apply_rejected_verdict_refused():
    ds = linear_figure_dataset()
    a = ScriptedTool("a")

    def script(dataset, session):
        a.next_error = 1.0
        verdict = session.propose("b", [replace_b1()])
        with pytest.raises(MalformedModification):
            session.apply("b", verdict)

    coordinator = Coordinator()
    run_noop(coordinator, a, ds)
    run_noop(coordinator, ScriptedTool("b", script=script), ds)


def test_stale_verdict_refused():
    ds = linear_figure_dataset()

    def script(dataset, session):
        v1 = session.propose("b", [replace_b1()])
        v2 = session.propose("b", [replace_b1(3)])
        session.apply("b", v1)
        with pytest.raises(StaleVerdict):
            session.apply("b", v2)

    run_noop(Coordinator(), ScriptedTool("b", script=script), ds)
    assert ds.tables["B"].rows[1] == [2]


def test_relaxation_earliest_first_and_cap():
    ds = linear_figure_dataset()
    victims = []

    def script(dataset, session):
        victims.append(session.request_relaxation("d"))
        victims.append(session.request_relaxation("d"))
        victims.append(session.request_relaxation("d"))

    coordinator = Coordinator(CoordinatorConfig(max_relaxation_rounds=2))
    for name in ("a", "b", "c"):
        run_noop(coordinator, ScriptedTool(name), ds)
    summary = run_noop(coordinator, ScriptedTool("d", script=script), ds)
    assert victims == ["a", "b", None]  # cap stops the third round
    assert summary.relaxed == ("a", "b")


def test_relaxed_tool_stops_validating():
    ds = linear_figure_dataset()
    a = ScriptedTool("a")
    accepted = []

    def script(dataset, session):
        a.next_error = 1.0
        accepted.append(session.propose("b", [replace_b1()]).accepted)
        assert session.request_relaxation("b") == "a"
        accepted.append(session.submit("b", [replace_b1()]).accepted)

    coordinator = Coordinator()
    run_noop(coordinator, a, ds)
    run_noop(coordinator, ScriptedTool("b", script=script), ds)
    assert accepted == [False, True]


def test_relaxation_with_no_candidates():
    ds = linear_figure_dataset()

    def script(dataset, session):
        assert session.request_relaxation("a") is None

    run_noop(Coordinator(), ScriptedTool("a", script=script), ds)


def test_exhausted_builds_error():
    coordinator = Coordinator()
    exc = coordinator.exhausted("linear", "no demotion candidates")
    assert isinstance(exc, CoordinatorExhausted)
    assert "linear" in str(exc)


def test_conservation_checked_at_run_end():
    ds = linear_figure_dataset()

    def script(dataset, session):
        session.submit("b", [DeleteValues(table="B", tuple_ids=(1,), col_indexes=(0,))])

    with pytest.raises(ConservationViolation):
        run_noop(Coordinator(), ScriptedTool("b", script=script), ds)


def test_pending_empty_cells_checked_at_run_end():
    ds = linear_figure_dataset()
    # a cell left Empty before the run: balanced edits cannot clear it
    ds.tables["C"].rows[1][0] = EMPTY
    ds.tables["C"].empty_cells += 1

    def script(dataset, session):
        session.submit(
            "b",
            [
                DeleteValues(table="B", tuple_ids=(1,), col_indexes=(0,)),
                InsertValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(2,)),
            ],
        )

    with pytest.raises(PendingEmptyCells):
        run_noop(Coordinator(), ScriptedTool("b", script=script), ds)


def test_target_infeasible_without_repair():
    ds = linear_figure_dataset()
    bad = ScriptedTool("a", violations=[Violation("L1", (), "too big")])
    coordinator = Coordinator()
    handle = coordinator.register(bad)
    with pytest.raises(TargetInfeasible):
        coordinator.run_tool(handle, None, ds, repair=False)


def test_repair_leftovers_rejected():
    ds = linear_figure_dataset()
    bad = ScriptedTool("a", violations=[Violation("L1", (), "too big")])
    coordinator = Coordinator()
    handle = coordinator.register(bad)
    with pytest.raises(InfeasibleRepair):
        coordinator.run_tool(handle, None, ds)
    assert bad.repairs == 1


def test_coordinator_binds_to_one_dataset():
    coordinator = Coordinator()
    run_noop(coordinator, ScriptedTool("a"), linear_figure_dataset())
    with pytest.raises(MalformedModification):
        run_noop(coordinator, ScriptedTool("b"), linear_figure_dataset())


def test_crosscheck_calls_verify_tracking():
    ds = linear_figure_dataset()
    a = ScriptedTool("a")

    def script(dataset, session):
        session.submit("b", [replace_b1()])

    coordinator = Coordinator(CoordinatorConfig(crosscheck=True))
    run_noop(coordinator, a, ds)
    run_noop(coordinator, ScriptedTool("b", script=script), ds)
    assert a.verified == 1


def test_all_trackers_notified_on_apply():
    ds = linear_figure_dataset()
    a = ScriptedTool("a")
    b = ScriptedTool("b")

    def script(dataset, session):
        session.submit("c", [replace_b1()])

    coordinator = Coordinator()
    run_noop(coordinator, a, ds)
    run_noop(coordinator, b, ds)
    run_noop(coordinator, ScriptedTool("c", script=script), ds)
    # validators a, b each saw trial, rollback inverse, definitive replay
    assert len(a.events) == 3
    assert len(b.events) == 3
    assert a.events[-1].cells == ((1, 0, 1, 2),)
