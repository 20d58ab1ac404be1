"""Trajectory container validation and accessors."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from koopmodel import InputError, Snapshot, Trajectory, TrajectorySet


def make_trajectory(values, id="t0", t0=0):
    return Trajectory.from_array(np.asarray(values, dtype=float), id=id, t0=t0)


def test_snapshot_coerces_to_float_vector():
    snap = Snapshot(values=[1, 2, 3], time_index=0)
    assert snap.values.dtype == float
    assert snap.values.shape == (3,)


def test_snapshot_rejects_nan_and_matrix_and_negative_time():
    with pytest.raises(InputError):
        Snapshot(values=[1.0, np.nan], time_index=0)
    with pytest.raises(InputError):
        Snapshot(values=[[1.0]], time_index=0)
    with pytest.raises(InputError):
        Snapshot(values=[1.0], time_index=-1)


def test_trajectory_requires_consecutive_times():
    good = Trajectory(
        snapshots=(Snapshot([0.0], 3), Snapshot([1.0], 4), Snapshot([2.0], 5)),
        id="run",
    )
    assert len(good) == 3
    with pytest.raises(InputError, match="increase by 1"):
        Trajectory(snapshots=(Snapshot([0.0], 0), Snapshot([1.0], 2)), id="bad")


def test_trajectory_requires_two_snapshots_and_constant_width():
    with pytest.raises(InputError, match="at least 2"):
        Trajectory(snapshots=(Snapshot([0.0], 0),), id="short")
    with pytest.raises(InputError, match="width"):
        Trajectory(
            snapshots=(Snapshot([0.0], 0), Snapshot([1.0, 2.0], 1)), id="ragged"
        )


def test_from_array_promotes_1d_to_single_feature():
    traj = make_trajectory([1.0, 2.0, 3.0])
    assert traj.n_features == 1
    assert np.array_equal(traj.feature_series(0), [1.0, 2.0, 3.0])


def test_from_array_rows_are_snapshots():
    traj = make_trajectory([[1.0, 10.0], [2.0, 20.0]], t0=7)
    assert [s.time_index for s in traj.snapshots] == [7, 8]
    assert np.array_equal(traj.feature_series(1), [10.0, 20.0])


def test_from_array_rejects_3d():
    with pytest.raises(InputError):
        Trajectory.from_array(np.zeros((2, 2, 2)), id="cube")


def test_set_requires_matching_feature_count():
    t0 = make_trajectory([[1.0, 2.0], [3.0, 4.0]], id="a")
    t1 = make_trajectory([1.0, 2.0], id="b")
    with pytest.raises(InputError, match="features"):
        TrajectorySet(trajectories=(t0, t1), feature_names=("u", "v"))


def test_set_requires_unique_ids_and_resolves_lookups():
    t0 = make_trajectory([1.0, 2.0], id="a")
    t1 = make_trajectory([3.0, 4.0], id="b")
    data = TrajectorySet(trajectories=(t0, t1), feature_names=("u",))
    assert data.trajectory_ids == ("a", "b")
    assert data.feature_index("u") == 0
    assert data.trajectory("b") is t1
    with pytest.raises(InputError):
        data.feature_index("w")
    with pytest.raises(InputError):
        data.trajectory("c")
    with pytest.raises(InputError, match="unique"):
        TrajectorySet(trajectories=(t0, t0), feature_names=("u",))


@settings(max_examples=100, deadline=None)
@given(
    arrays(
        dtype=float,
        shape=st.tuples(st.integers(2, 12), st.integers(1, 4)),
        elements=st.floats(-1e6, 1e6, allow_nan=False),
    ),
    st.integers(0, 1000),
)
def test_from_array_round_trips_values(values, t0):
    traj = Trajectory.from_array(values, id="rt", t0=t0)
    stacked = np.stack([s.values for s in traj.snapshots])
    assert np.array_equal(stacked, values)
    for j in range(values.shape[1]):
        assert np.array_equal(traj.feature_series(j), values[:, j])
