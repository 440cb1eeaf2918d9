"""Modification checking, undo round trips and the journal wire format."""

import json

import pytest
from hypothesis import given, settings, strategies as st

from conftest import (
    fill_random,
    linear_figure_dataset,
    random_fuzz_batch,
    seeded,
    social_schema,
)
from scaletweak import (
    AppendTuple,
    DeleteValues,
    InsertValues,
    ReplaceValues,
    apply_modification,
    check_modification,
    decode_journal_record,
    encode_journal_record,
    replay_journal,
)
from scaletweak.dataset import EMPTY, datasets_equal
from scaletweak.errors import MalformedModification
from scaletweak.modify import apply_undo, cell_delta


def delete_b1():
    return DeleteValues(table="B", tuple_ids=(1,), col_indexes=(0,))


def test_delete_then_insert_round_trip():
    ds = linear_figure_dataset()
    check_modification(ds, delete_b1())
    apply_modification(ds, delete_b1())
    assert ds.tables["B"].rows[1][0] is EMPTY
    assert ds.empty_cell_count() == 1
    ins = InsertValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(2,))
    check_modification(ds, ins)
    apply_modification(ds, ins)
    assert ds.tables["B"].rows[1] == [2]
    assert ds.empty_cell_count() == 0


def test_delete_requires_populated_cell():
    ds = linear_figure_dataset()
    apply_modification(ds, delete_b1())
    with pytest.raises(MalformedModification):
        check_modification(ds, delete_b1())


def test_insert_requires_empty_cell():
    ds = linear_figure_dataset()
    ins = InsertValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(2,))
    with pytest.raises(MalformedModification):
        check_modification(ds, ins)


def test_replace_requires_populated_cell():
    ds = linear_figure_dataset()
    apply_modification(ds, delete_b1())
    rep = ReplaceValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(2,))
    with pytest.raises(MalformedModification):
        check_modification(ds, rep)


def test_foreign_key_value_must_be_live():
    ds = linear_figure_dataset()
    rep = ReplaceValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(9,))
    with pytest.raises(MalformedModification):
        check_modification(ds, rep)


def test_value_kind_is_enforced():
    ds = linear_figure_dataset()
    rep = ReplaceValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=("2",))
    with pytest.raises(MalformedModification):
        check_modification(ds, rep)


def test_empty_never_insertable():
    ds = linear_figure_dataset()
    ins = InsertValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(EMPTY,))
    with pytest.raises(MalformedModification):
        check_modification(ds, ins)


def test_shape_errors():
    ds = linear_figure_dataset()
    with pytest.raises(MalformedModification):
        check_modification(ds, DeleteValues(table="B", tuple_ids=(), col_indexes=(0,)))
    with pytest.raises(MalformedModification):
        check_modification(ds, DeleteValues(table="B", tuple_ids=(1, 1), col_indexes=(0,)))
    with pytest.raises(MalformedModification):
        check_modification(ds, DeleteValues(table="B", tuple_ids=(1,), col_indexes=(4,)))
    with pytest.raises(MalformedModification):
        check_modification(ds, DeleteValues(table="Z", tuple_ids=(1,), col_indexes=(0,)))
    with pytest.raises(MalformedModification):
        check_modification(
            ds,
            ReplaceValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(2, 3)),
        )


def test_append_assigns_requested_pk():
    ds = linear_figure_dataset()
    mod = AppendTuple(table="B", values=(3,), pk=9)
    check_modification(ds, mod)
    apply_modification(ds, mod)
    assert ds.tables["B"].rows[9] == [3]


def test_append_pk_collision():
    ds = linear_figure_dataset()
    with pytest.raises(MalformedModification):
        check_modification(ds, AppendTuple(table="B", values=(3,), pk=1))


def test_undo_reverses_each_kind():
    ds = linear_figure_dataset()
    base = ds.clone()
    undos = []
    for mod in (
        delete_b1(),
        AppendTuple(table="B", values=(2,), pk=6),
        ReplaceValues(table="C", tuple_ids=(1,), col_indexes=(0,), values=(5,)),
    ):
        undos.append(apply_modification(ds, mod))
    assert not datasets_equal(ds, base)
    for undo in reversed(undos):
        apply_undo(ds, undo)
    assert datasets_equal(ds, base)
    assert ds.empty_cell_count() == 0


def test_cell_delta():
    assert cell_delta(DeleteValues(table="B", tuple_ids=(1, 2), col_indexes=(0,))) == (2, 0)
    assert cell_delta(
        InsertValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(2,))
    ) == (0, 1)
    assert cell_delta(
        ReplaceValues(table="B", tuple_ids=(1,), col_indexes=(0,), values=(2,))
    ) == (0, 0)
    assert cell_delta(AppendTuple(table="B", values=(2,))) == (0, 0)


def test_journal_record_round_trip():
    mods = [
        DeleteValues(table="B", tuple_ids=(1, 2), col_indexes=(0,)),
        InsertValues(table="B", tuple_ids=(1, 2), col_indexes=(0,), values=(3,)),
        ReplaceValues(table="C", tuple_ids=(4,), col_indexes=(0,), values=(1,)),
        AppendTuple(table="D", values=(5,), pk=8),
    ]
    for step, mod in enumerate(mods):
        rec = encode_journal_record(mod, "linear", step)
        rec = json.loads(json.dumps(rec, sort_keys=True))  # survive the wire
        back, tool, got_step = decode_journal_record(rec)
        assert back == mod
        assert (tool, got_step) == ("linear", step)


def test_append_without_pk_encodes_assigned_pk():
    mod = AppendTuple(table="B", values=(2,))
    rec = encode_journal_record(mod, "pairwise", 3, assigned_pk=17)
    back, _, _ = decode_journal_record(rec)
    assert back == AppendTuple(table="B", values=(2,), pk=17)


def test_decode_rejects_unknown_op():
    rec = encode_journal_record(delete_b1(), "linear", 0)
    rec["op"] = "dropTable"
    with pytest.raises(MalformedModification):
        decode_journal_record(rec)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_random_batches_replay_identically(seed):
    rng = seeded(seed)
    schema = social_schema()
    ds = fill_random(schema, {t.name: 8 for t in schema.tables}, rng)
    start = ds.clone()
    journal = []
    for step in range(40):
        for mod in random_fuzz_batch(ds, rng):
            check_modification(ds, mod)
            undo = apply_modification(ds, mod)
            pk = undo.pk if isinstance(mod, AppendTuple) else None
            journal.append(encode_journal_record(mod, "fuzz", step, assigned_pk=pk))
    replayed = replay_journal(start, journal)
    assert datasets_equal(replayed, ds)
