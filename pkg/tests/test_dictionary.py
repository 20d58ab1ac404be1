"""Observable dictionaries: grammar, evaluation, lifting, dependence."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopmodel import (
    ConfigError,
    Dictionary,
    EvaluationError,
    InputError,
    InsufficientHistoryError,
    LiftError,
    Snapshot,
    Trajectory,
    TrajectorySet,
    UnknownObservableError,
    delay_embed,
    dependence_closure,
    evaluate_snapshot,
    generator_features,
    lift_trajectories,
)
from conftest import worked_dictionary


def snaps(*rows, t0=0):
    return [Snapshot(values=list(r), time_index=t0 + k)
            for k, r in enumerate(rows)]


def single_feature_set(series, id="s"):
    traj = Trajectory.from_array(np.asarray(series, dtype=float), id=id)
    return TrajectorySet(trajectories=(traj,), feature_names=("x",))


# -- grammar -----------------------------------------------------------------

def test_kind_grammar_round_trip():
    entries = [
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
        {"id": "sx", "kind": "sin", "params": {"of": "x"}},
        {"id": "cx", "kind": "cos", "params": {"of": 0}},
        {"id": "xy", "kind": "monomial", "params": {"exponents": [1, 1]}},
        {"id": "dx", "kind": "delay", "params": {"of": "x", "lag": 2}},
        {"id": "tx", "kind": "composition", "params": {"fn": "tanh", "of": "x"}},
        {"id": "lin", "kind": "composition",
         "params": {"weights": {"x": 2.0, "sx": -1.0}, "bias": 0.5}},
    ]
    dic = Dictionary.from_spec(entries, 2)
    assert dic.ids == ("x", "sx", "cx", "xy", "dx", "tx", "lin")
    assert dic.max_lag == 2


@pytest.mark.parametrize("entry,message", [
    ({"id": "a", "kind": "warp", "params": {}}, "kind"),
    ({"id": "a", "kind": "coordinate", "params": {"index": 3}}, "index"),
    ({"id": "a", "kind": "sin", "params": {"of": "missing"}}, "missing"),
    ({"id": "a", "kind": "monomial", "params": {"exponents": [1]}}, "exponent"),
    ({"id": "a", "kind": "monomial", "params": {"exponents": [1, -1]}},
     "exponent"),
    ({"id": "a", "kind": "delay", "params": {"of": "a", "lag": 1}}, "a"),
    ({"id": "a", "kind": "composition", "params": {"fn": "foo", "of": 0}},
     "foo"),
])
def test_bad_entries_rejected(entry, message):
    with pytest.raises(ConfigError, match=message):
        Dictionary.from_spec([entry], 2)


def test_forward_references_rejected():
    entries = [
        {"id": "sx", "kind": "sin", "params": {"of": "x"}},
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
    ]
    with pytest.raises(ConfigError):
        Dictionary.from_spec(entries, 1)


def test_duplicate_ids_rejected():
    entry = {"id": "x", "kind": "coordinate", "params": {"index": 0}}
    with pytest.raises(ConfigError, match="duplicate"):
        Dictionary.from_spec([entry, dict(entry)], 1)


def test_spec_hash_is_stable_and_distinguishes():
    a = worked_dictionary()
    b = worked_dictionary()
    assert a.spec_hash() == b.spec_hash()
    assert len(a.spec_hash()) == 32
    other = Dictionary.from_spec(
        [{"id": "x", "kind": "coordinate", "params": {"index": 0}}], 2
    )
    assert a.spec_hash() != other.spec_hash()


# -- evaluation --------------------------------------------------------------

def test_worked_dict_at_origin():
    dic = worked_dictionary()
    out = evaluate_snapshot(dic, snaps([0.0, 5.0]))
    assert np.allclose(out, [0.0, 0.0, 5.0])


def test_worked_dict_at_half_pi():
    dic = worked_dictionary()
    out = evaluate_snapshot(dic, snaps([math.pi / 2, 1.0]))
    assert np.allclose(out, [math.pi / 2, 1.0, 1.0])


def test_delay_reads_previous_snapshot():
    dic = Dictionary.from_spec([
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
        {"id": "px", "kind": "delay", "params": {"of": "x", "lag": 1}},
    ], 1)
    out = evaluate_snapshot(dic, snaps([1.0], [2.0]))
    assert np.allclose(out, [2.0, 1.0])


def test_delay_needs_enough_history():
    dic = Dictionary.from_spec([
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
        {"id": "px", "kind": "delay", "params": {"of": "x", "lag": 1}},
    ], 1)
    with pytest.raises(InsufficientHistoryError):
        evaluate_snapshot(dic, snaps([1.0]))


def test_window_must_be_contiguous():
    dic = worked_dictionary()
    window = [Snapshot([0.0, 0.0], 0), Snapshot([1.0, 1.0], 5)]
    with pytest.raises(InputError):
        evaluate_snapshot(dic, window)


def test_evaluation_error_names_observable():
    dic = Dictionary.from_spec([
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
        {"id": "logx", "kind": "composition", "params": {"fn": "log", "of": "x"}},
    ], 1)
    with pytest.raises(EvaluationError, match="logx"):
        evaluate_snapshot(dic, snaps([-1.0]))


def test_monomial_and_linear_combination_values():
    dic = Dictionary.from_spec([
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
        {"id": "y", "kind": "coordinate", "params": {"index": 1}},
        {"id": "x2y", "kind": "monomial", "params": {"exponents": [2, 1]}},
        {"id": "aff", "kind": "composition",
         "params": {"weights": {"x": 2.0, "y": -3.0}, "bias": 1.0}},
    ], 2)
    out = evaluate_snapshot(dic, snaps([3.0, 4.0]))
    assert np.allclose(out, [3.0, 4.0, 36.0, 2 * 3.0 - 3 * 4.0 + 1.0])


# -- lifting -----------------------------------------------------------------

def test_identity_lift_is_shift_pairing():
    dic = Dictionary.from_spec(
        [{"id": "x", "kind": "coordinate", "params": {"index": 0}}], 1
    )
    lifted = lift_trajectories(dic, single_feature_set([1.0, 2.0, 3.0]))
    assert np.array_equal(lifted.current, [[1.0, 2.0]])
    assert np.array_equal(lifted.shifted, [[2.0, 3.0]])
    assert lifted.x0_columns == (0,)
    assert lifted.column_origin == (("s", 0), ("s", 1))


def test_column_count_across_trajectories():
    dic = Dictionary.from_spec(
        [{"id": "x", "kind": "coordinate", "params": {"index": 0}}], 1
    )
    t0 = Trajectory.from_array([1.0, 2.0, 3.0, 4.0], id="a")
    t1 = Trajectory.from_array([5.0, 6.0, 7.0], id="b")
    data = TrajectorySet(trajectories=(t0, t1), feature_names=("x",))
    lifted = lift_trajectories(dic, data)
    assert lifted.n_columns == (4 - 1) + (3 - 1)
    # Never pair across the trajectory boundary.
    assert lifted.current[0, 3] == 5.0 and lifted.shifted[0, 2] == 4.0
    assert lifted.x0_columns == (0, 3)


def test_worked_example_column_pairing(worked_data, worked_dict):
    lifted = lift_trajectories(worked_dict, worked_data)
    k = 17
    traj_id, t = lifted.column_origin[k]
    state = worked_data.trajectory(traj_id).snapshots[t].values
    x, y = state
    assert np.allclose(lifted.current[:, k], [x, math.sin(x), y])
    assert np.allclose(lifted.shifted[:, k],
                       [x + math.sin(x), math.sin(x + math.sin(x)), y + x])


def test_delay_lag_shrinks_column_count():
    dic = Dictionary.from_spec([
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
        {"id": "px", "kind": "delay", "params": {"of": "x", "lag": 2}},
    ], 1)
    lifted = lift_trajectories(dic, single_feature_set([1.0, 2.0, 3.0, 4.0, 5.0]))
    # length m = 5, max lag L = 2 -> m - 1 - L = 2 column pairs
    assert lifted.n_columns == 2
    assert np.array_equal(lifted.current, [[3.0, 4.0], [1.0, 2.0]])
    assert np.array_equal(lifted.shifted, [[4.0, 5.0], [2.0, 3.0]])


def test_too_short_trajectory_is_named():
    dic = Dictionary.from_spec([
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
        {"id": "px", "kind": "delay", "params": {"of": "x", "lag": 3}},
    ], 1)
    with pytest.raises(LiftError, match="shorty"):
        lift_trajectories(dic, single_feature_set([1.0, 2.0, 3.0], id="shorty"))


# -- delay embedding ---------------------------------------------------------

def test_delay_embed_newest_first():
    traj = Trajectory.from_array([1.0, 2.0, 3.0, 4.0], id="d")
    emb = delay_embed(traj, 0, 2)
    assert np.array_equal(emb, [[2.0, 3.0, 4.0], [1.0, 2.0, 3.0]])


def test_delay_embed_depth_one_and_full():
    traj = Trajectory.from_array([1.0, 2.0, 3.0, 4.0], id="d")
    assert np.array_equal(delay_embed(traj, 0, 1), [[1.0, 2.0, 3.0, 4.0]])
    assert np.array_equal(delay_embed(traj, 0, 4), [[4.0], [3.0], [2.0], [1.0]])
    with pytest.raises(Exception):
        delay_embed(traj, 0, 5)


# -- dependence --------------------------------------------------------------

def test_closure_of_first_coordinate_reaches_sine(worked_dict):
    assert dependence_closure(worked_dict, {"x"}) == {"x", "sinx"}


def test_closure_fixed_points(worked_dict):
    assert dependence_closure(worked_dict, {"y"}) == {"y"}
    everything = set(worked_dict.ids)
    assert dependence_closure(worked_dict, everything) == everything


def test_closure_unknown_id(worked_dict):
    with pytest.raises(UnknownObservableError):
        dependence_closure(worked_dict, {"nope"})


def test_generator_features(worked_dict):
    assert generator_features(worked_dict, {"x"}) == {0}
    assert generator_features(worked_dict, {"sinx"}) == {0}
    assert generator_features(worked_dict, {"x", "y"}) == {0, 1}


@st.composite
def dictionaries_and_seeds(draw):
    n_features = draw(st.integers(1, 3))
    entries = [{"id": f"c{i}", "kind": "coordinate", "params": {"index": i}}
               for i in range(n_features)]
    n_extra = draw(st.integers(0, 4))
    for j in range(n_extra):
        base = draw(st.sampled_from([e["id"] for e in entries]))
        kind = draw(st.sampled_from(["sin", "cos"]))
        entries.append({"id": f"e{j}", "kind": kind, "params": {"of": base}})
    ids = [e["id"] for e in entries]
    small = draw(st.sets(st.sampled_from(ids), max_size=len(ids)))
    big = small | draw(st.sets(st.sampled_from(ids), max_size=len(ids)))
    return Dictionary.from_spec(entries, n_features), small, big


@settings(max_examples=100, deadline=None)
@given(dictionaries_and_seeds())
def test_closure_monotone_and_idempotent(case):
    dic, small, big = case
    closed_small = dependence_closure(dic, small)
    closed_big = dependence_closure(dic, big)
    assert closed_small <= closed_big
    assert dependence_closure(dic, closed_small) == closed_small


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=12))
def test_shift_consistency_single_trajectory(series):
    dic = Dictionary.from_spec([
        {"id": "x", "kind": "coordinate", "params": {"index": 0}},
        {"id": "sx", "kind": "sin", "params": {"of": "x"}},
    ], 1)
    lifted = lift_trajectories(dic, single_feature_set(series))
    for k in range(lifted.n_columns - 1):
        assert np.array_equal(lifted.shifted[:, k], lifted.current[:, k + 1])
