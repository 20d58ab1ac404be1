"""Raw observed data: snapshots organized into regularly sampled trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Snapshot:
    """One observation vector at an integer time index."""

    values: np.ndarray
    time_index: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise InputError("snapshot values must be a 1-D vector")
        if not np.all(np.isfinite(values)):
            raise InputError(
                f"snapshot at t={self.time_index} contains NaN/Inf entries"
            )
        if self.time_index < 0:
            raise InputError("time_index must be non-negative")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class Trajectory:
    """An ordered run of snapshots sampled at consecutive time indices."""

    snapshots: tuple[Snapshot, ...]
    id: str

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if len(snaps) < 2:
            raise InputError(f"trajectory {self.id!r} needs at least 2 snapshots")
        n = len(snaps[0].values)
        for prev, cur in zip(snaps, snaps[1:]):
            if cur.time_index != prev.time_index + 1:
                raise InputError(
                    f"trajectory {self.id!r}: time indices must increase by 1 "
                    f"(got {prev.time_index} -> {cur.time_index})"
                )
            if len(cur.values) != n:
                raise InputError(
                    f"trajectory {self.id!r}: snapshot width changes from {n} "
                    f"to {len(cur.values)}"
                )
        object.__setattr__(self, "snapshots", snaps)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def n_features(self) -> int:
        return len(self.snapshots[0].values)

    def feature_series(self, feature: int) -> np.ndarray:
        """The scalar time series of one feature, ordered by time."""
        return np.array([s.values[feature] for s in self.snapshots])

    @classmethod
    def from_array(cls, values, id: str, t0: int = 0) -> "Trajectory":
        """Build a trajectory from an (m, n) array with one snapshot per row.

        A 1-D input of length m is treated as m snapshots of a single feature.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise InputError("trajectory array must be 1-D or 2-D")
        snaps = tuple(
            Snapshot(values=row, time_index=t0 + k) for k, row in enumerate(values)
        )
        return cls(snapshots=snaps, id=id)


@dataclass(frozen=True)
class TrajectorySet:
    """One or more trajectories sharing a common feature layout."""

    trajectories: tuple[Trajectory, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        names = tuple(self.feature_names)
        if not trajs:
            raise InputError("a trajectory set needs at least one trajectory")
        n = len(names)
        for traj in trajs:
            if traj.n_features != n:
                raise InputError(
                    f"trajectory {traj.id!r} has {traj.n_features} features, "
                    f"expected {n}"
                )
        ids = [t.id for t in trajs]
        if len(set(ids)) != len(ids):
            raise InputError("trajectory ids must be unique")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def trajectory_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.trajectories)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise InputError(f"unknown feature {name!r}") from None

    def trajectory(self, id: str) -> Trajectory:
        for traj in self.trajectories:
            if traj.id == id:
                return traj
        raise InputError(f"unknown trajectory {id!r}")
