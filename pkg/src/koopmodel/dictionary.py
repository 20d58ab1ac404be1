"""Observable dictionaries: definition, evaluation, and lifted data matrices.

A dictionary is an ordered list of closed-form observables over the raw
features. Lifting a trajectory evaluates every observable at every usable
time index and pairs each column with its one-step-ahead partner, producing
the two data matrices the operator fit consumes. The dictionary also keeps
the functional-dependence graph used by representation analysis.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    EvaluationError,
    InsufficientHistoryError,
    LiftError,
    ShapeMismatchError,
    UnknownObservableError,
)
from .trajectories import Snapshot, Trajectory, TrajectorySet

KINDS = ("coordinate", "sin", "cos", "monomial", "delay", "composition")

# Closed set of named unary maps usable in composition observables.
UNARY_FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sin": np.sin,
    "cos": np.cos,
}


@dataclass(frozen=True)
class Observable:
    """One dictionary entry.

    ``depends_on`` holds ids of other observables, ``feature_depends`` raw
    feature indices; together they justify every edge of the dependence
    graph. ``lag`` is the total delay depth consumed when evaluating.
    """

    id: str
    kind: str
    params: dict
    depends_on: frozenset[str]
    feature_depends: frozenset[int]
    lag: int


def _normalize_entry(entry: dict, index: int) -> dict:
    if not isinstance(entry, dict):
        raise ConfigError(f"dictionary entry #{index} must be an object")
    unknown = set(entry) - {"id", "kind", "params", "depends_on"}
    if unknown:
        raise ConfigError(
            f"dictionary entry #{index}: unknown keys {sorted(unknown)}"
        )
    if "id" not in entry or not isinstance(entry["id"], str) or not entry["id"]:
        raise ConfigError(f"dictionary entry #{index} needs a non-empty string id")
    if entry.get("kind") not in KINDS:
        raise ConfigError(
            f"observable {entry.get('id')!r}: kind must be one of {KINDS}"
        )
    return {
        "id": entry["id"],
        "kind": entry["kind"],
        "params": dict(entry.get("params", {})),
        "depends_on": list(entry.get("depends_on", [])),
    }


class Dictionary:
    """Ordered observable dictionary with its dependence graph.

    Build with :meth:`from_spec`; entries reference earlier entries only,
    so the dependence graph is acyclic by construction.
    """

    def __init__(self, observables: list[Observable], n_features: int,
                 canonical_entries: list[dict]):
        if not observables:
            raise ConfigError("a dictionary needs at least one observable")
        ids = [o.id for o in observables]
        if len(set(ids)) != len(ids):
            raise ConfigError("observable ids must be unique")
        self.observables: tuple[Observable, ...] = tuple(observables)
        self.n_features = n_features
        self._canonical_entries = canonical_entries
        self._index = {o.id: i for i, o in enumerate(self.observables)}

    # -- construction -----------------------------------------------------

    @classmethod
    def from_spec(cls, entries: list[dict], n_features: int) -> "Dictionary":
        """Build from a declarative list of ``{id, kind, params, depends_on}``.

        ``depends_on`` may add extra declared dependence edges (ids of earlier
        observables or feature indices) on top of the structural ones implied
        by the kind.
        """
        if n_features < 1:
            raise ConfigError("n_features must be >= 1")
        seen: dict[str, Observable] = {}
        observables: list[Observable] = []
        canonical: list[dict] = []
        for index, raw in enumerate(entries):
            entry = _normalize_entry(raw, index)
            oid = entry["id"]
            if oid in seen:
                raise ConfigError(f"duplicate observable id {oid!r}")
            obs_deps, feat_deps, lag = cls._structural_deps(
                entry, seen, n_features
            )
            for dep in entry["depends_on"]:
                if isinstance(dep, str):
                    if dep not in seen:
                        raise ConfigError(
                            f"observable {oid!r}: declared dependence on "
                            f"{dep!r}, which is not a previously defined id"
                        )
                    obs_deps.add(dep)
                elif isinstance(dep, int) and not isinstance(dep, bool):
                    if not 0 <= dep < n_features:
                        raise ConfigError(
                            f"observable {oid!r}: feature index {dep} out of "
                            f"range for {n_features} features"
                        )
                    feat_deps.add(dep)
                else:
                    raise ConfigError(
                        f"observable {oid!r}: depends_on entries must be "
                        f"observable ids or feature indices"
                    )
            obs = Observable(
                id=oid,
                kind=entry["kind"],
                params=entry["params"],
                depends_on=frozenset(obs_deps),
                feature_depends=frozenset(feat_deps),
                lag=lag,
            )
            seen[oid] = obs
            observables.append(obs)
            canonical.append({
                "id": oid,
                "kind": obs.kind,
                "params": entry["params"],
                "depends_on": sorted(obs_deps) + sorted(feat_deps),
            })
        return cls(observables, n_features, canonical)

    @staticmethod
    def _structural_deps(entry: dict, seen: dict[str, Observable],
                         n_features: int):
        """Dependencies and delay depth implied by the kind itself."""
        oid, kind, params = entry["id"], entry["kind"], entry["params"]
        obs_deps: set[str] = set()
        feat_deps: set[int] = set()
        lag = 0

        def ref(value, what="of"):
            """Resolve an id-or-feature reference, tracking deps and lag."""
            nonlocal lag
            if isinstance(value, str):
                if value not in seen:
                    raise ConfigError(
                        f"observable {oid!r}: {what!r} references {value!r}, "
                        f"which is not a previously defined id"
                    )
                obs_deps.add(value)
                lag = max(lag, seen[value].lag)
            elif isinstance(value, int) and not isinstance(value, bool):
                if not 0 <= value < n_features:
                    raise ConfigError(
                        f"observable {oid!r}: feature index {value} out of "
                        f"range for {n_features} features"
                    )
                feat_deps.add(value)
            else:
                raise ConfigError(
                    f"observable {oid!r}: {what!r} must be an observable id "
                    f"or a feature index"
                )

        if kind == "coordinate":
            i = params.get("index")
            if not isinstance(i, int) or isinstance(i, bool) \
                    or not 0 <= i < n_features:
                raise ConfigError(
                    f"observable {oid!r}: coordinate needs an 'index' in "
                    f"[0, {n_features})"
                )
            feat_deps.add(i)
        elif kind in ("sin", "cos"):
            if "of" not in params:
                raise ConfigError(f"observable {oid!r}: {kind} needs 'of'")
            ref(params["of"])
        elif kind == "monomial":
            exps = params.get("exponents")
            if (not isinstance(exps, (list, tuple))
                    or len(exps) != n_features
                    or any(not isinstance(e, int) or isinstance(e, bool)
                           or e < 0 for e in exps)):
                raise ConfigError(
                    f"observable {oid!r}: monomial needs 'exponents', a list "
                    f"of {n_features} non-negative integers"
                )
            feat_deps.update(i for i, e in enumerate(exps) if e > 0)
        elif kind == "delay":
            base = params.get("of")
            d = params.get("lag")
            if not isinstance(base, str):
                raise ConfigError(
                    f"observable {oid!r}: delay needs 'of', a previously "
                    f"defined observable id"
                )
            if not isinstance(d, int) or isinstance(d, bool) or d < 1:
                raise ConfigError(
                    f"observable {oid!r}: delay needs integer 'lag' >= 1"
                )
            ref(base)
            lag += d
        elif kind == "composition":
            if "fn" in params:
                fn = params["fn"]
                if fn not in UNARY_FUNCTIONS:
                    raise ConfigError(
                        f"observable {oid!r}: unknown function {fn!r}; "
                        f"choose from {sorted(UNARY_FUNCTIONS)}"
                    )
                if not isinstance(params.get("of"), str):
                    raise ConfigError(
                        f"observable {oid!r}: composition with 'fn' needs "
                        f"'of', an observable id"
                    )
                ref(params["of"])
            elif "weights" in params:
                weights = params["weights"]
                if not isinstance(weights, dict) or not weights:
                    raise ConfigError(
                        f"observable {oid!r}: 'weights' must be a non-empty "
                        f"mapping of observable id to coefficient"
                    )
                for key, w in weights.items():
                    if not isinstance(w, (int, float)) or isinstance(w, bool):
                        raise ConfigError(
                            f"observable {oid!r}: weight for {key!r} must be "
                            f"a number"
                        )
                    ref(key, what="weights")
                bias = params.get("bias", 0.0)
                if not isinstance(bias, (int, float)) or isinstance(bias, bool):
                    raise ConfigError(f"observable {oid!r}: 'bias' must be a number")
            else:
                raise ConfigError(
                    f"observable {oid!r}: composition needs 'fn'/'of' or "
                    f"'weights'"
                )
        return obs_deps, feat_deps, lag

    # -- basic queries ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.observables)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(o.id for o in self.observables)

    def index_of(self, oid: str) -> int:
        try:
            return self._index[oid]
        except KeyError:
            raise UnknownObservableError(f"unknown observable {oid!r}") from None

    @property
    def max_lag(self) -> int:
        return max(o.lag for o in self.observables)

    @property
    def dependence_graph(self) -> dict[str, frozenset[str]]:
        """Observable-to-observable edges; acyclic by construction."""
        return {o.id: o.depends_on for o in self.observables}

    def coordinate_map(self) -> dict[int, str]:
        """Feature index -> id of a coordinate observable reading it."""
        mapping: dict[int, str] = {}
        for obs in self.observables:
            if obs.kind == "coordinate":
                mapping.setdefault(obs.params["index"], obs.id)
        return mapping

    # -- hashing ----------------------------------------------------------

    def canonical_json(self) -> str:
        """Canonical serialization of the dictionary specification."""
        doc = {"n_features": self.n_features,
               "observables": self._canonical_entries}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def spec_hash(self) -> bytes:
        """SHA-256 of the canonical specification (32 bytes)."""
        return hashlib.sha256(self.canonical_json().encode()).digest()

    # -- evaluation -------------------------------------------------------

    def _evaluate_series(self, values: np.ndarray) -> np.ndarray:
        """Evaluate every observable along an (m, n) block of snapshots.

        Returns a (d, m) array; entries before an observable's lag are NaN
        placeholders and are never read by callers. Non-finite values inside
        the valid region raise :class:`EvaluationError`.
        """
        m = values.shape[0]
        series: dict[str, np.ndarray] = {}
        out = np.full((len(self.observables), m), np.nan)

        def feature_or_series(refv) -> np.ndarray:
            if isinstance(refv, str):
                return series[refv]
            return values[:, refv]

        for row, obs in enumerate(self.observables):
            p = obs.params
            with np.errstate(all="ignore"):
                if obs.kind == "coordinate":
                    s = values[:, p["index"]].copy()
                elif obs.kind == "sin":
                    s = np.sin(feature_or_series(p["of"]))
                elif obs.kind == "cos":
                    s = np.cos(feature_or_series(p["of"]))
                elif obs.kind == "monomial":
                    s = np.ones(m)
                    for i, e in enumerate(p["exponents"]):
                        if e:
                            s = s * values[:, i] ** e
                elif obs.kind == "delay":
                    base = series[p["of"]]
                    d = p["lag"]
                    s = np.full(m, np.nan)
                    s[d:] = base[:m - d]
                else:  # composition
                    if "fn" in p:
                        s = UNARY_FUNCTIONS[p["fn"]](series[p["of"]])
                    else:
                        s = np.full(m, float(p.get("bias", 0.0)))
                        for key, w in p["weights"].items():
                            s = s + float(w) * feature_or_series(key)
            if obs.lag < m and not np.all(np.isfinite(s[obs.lag:])):
                bad = obs.lag + int(np.argmax(~np.isfinite(s[obs.lag:])))
                raise EvaluationError(
                    f"observable {obs.id!r} produced a non-finite value at "
                    f"window position {bad}"
                )
            series[obs.id] = s
            out[row] = s
        return out


@dataclass(frozen=True)
class LiftedPair:
    """The paired data matrices of dictionary lifts one time step apart.

    ``current[:, k]`` and ``shifted[:, k]`` are lifts of consecutive
    snapshots of the same trajectory. ``column_origin[k]`` records the
    (trajectory id, time index) of the snapshot lifted into ``current``;
    ``x0_columns[i]`` is the first column of the i-th trajectory.
    """

    current: np.ndarray
    shifted: np.ndarray
    column_origin: tuple[tuple[str, int], ...]
    x0_columns: tuple[int, ...]

    def __post_init__(self):
        if self.current.shape != self.shifted.shape:
            raise ShapeMismatchError("lifted matrices must have equal shapes")
        if self.current.shape[1] != len(self.column_origin):
            raise ShapeMismatchError("column_origin length must match columns")
        if not self.x0_columns:
            raise ShapeMismatchError("x0_columns must not be empty")

    @property
    def n_observables(self) -> int:
        return self.current.shape[0]

    @property
    def n_columns(self) -> int:
        return self.current.shape[1]


def evaluate_snapshot(dictionary: Dictionary,
                      window: list[Snapshot]) -> np.ndarray:
    """Evaluate the dictionary at the last snapshot of a contiguous window.

    Delay observables read backwards into the window, so the window must
    contain at least ``max_lag + 1`` snapshots.
    """
    window = list(window)
    need = dictionary.max_lag + 1
    if len(window) < need:
        raise InsufficientHistoryError(
            f"window of {len(window)} snapshots is too short; the deepest "
            f"delay needs {need}"
        )
    for prev, cur in zip(window, window[1:]):
        if cur.time_index != prev.time_index + 1:
            raise InsufficientHistoryError(
                "window snapshots must be contiguous in time"
            )
    values = np.stack([s.values for s in window])
    if values.shape[1] != dictionary.n_features:
        raise ShapeMismatchError(
            f"snapshots have {values.shape[1]} features, dictionary expects "
            f"{dictionary.n_features}"
        )
    return dictionary._evaluate_series(values)[:, -1].copy()


def lift_trajectories(dictionary: Dictionary,
                      data: TrajectorySet) -> LiftedPair:
    """Build the lifted pair over all trajectories, concatenated in order.

    Columns are time ordered within each trajectory; the last snapshot of
    one trajectory is never paired with the first of the next. Trajectories
    too short to produce a single column pair are an error.
    """
    if data.n_features != dictionary.n_features:
        raise ShapeMismatchError(
            f"data has {data.n_features} features, dictionary expects "
            f"{dictionary.n_features}"
        )
    lag = dictionary.max_lag
    too_short = [t.id for t in data.trajectories if len(t) - 1 - lag < 1]
    if too_short:
        raise LiftError(
            f"trajectories too short to lift with delay depth {lag}: "
            f"{too_short}"
        )
    blocks_g, blocks_gp = [], []
    origin: list[tuple[str, int]] = []
    x0_columns: list[int] = []
    offset = 0
    for traj in data.trajectories:
        values = np.stack([s.values for s in traj.snapshots])
        lifted = dictionary._evaluate_series(values)[:, lag:]
        blocks_g.append(lifted[:, :-1])
        blocks_gp.append(lifted[:, 1:])
        times = [s.time_index for s in traj.snapshots[lag:-1]]
        origin.extend((traj.id, t) for t in times)
        x0_columns.append(offset)
        offset += len(times)
    return LiftedPair(
        current=np.concatenate(blocks_g, axis=1),
        shifted=np.concatenate(blocks_gp, axis=1),
        column_origin=tuple(origin),
        x0_columns=tuple(x0_columns),
    )


def delay_embed(series: Trajectory, feature: int, depth: int) -> np.ndarray:
    """Stack delayed copies of one feature, newest entry first.

    Column j holds ``(f(j+depth-1), ..., f(j))``, so the result has shape
    ``(depth, m - depth + 1)``.
    """
    if depth < 1:
        raise ShapeMismatchError("depth must be a positive integer")
    values = series.feature_series(feature)
    m = len(values)
    if depth > m:
        raise ShapeMismatchError(
            f"depth {depth} exceeds series length {m}"
        )
    cols = m - depth + 1
    out = np.empty((depth, cols))
    for row in range(depth):
        out[row] = values[depth - 1 - row: depth - 1 - row + cols]
    return out


def dependence_closure(dictionary: Dictionary,
                       seed: set[str]) -> frozenset[str]:
    """Observables functionally generated by a seed set.

    An observable joins the closure once every one of its dependencies is
    generated: observable dependencies must already be in the closure, and a
    feature dependency counts as generated when the closure contains a
    coordinate observable reading that feature. Monotone and idempotent.
    """
    seed = set(seed)
    for oid in seed:
        dictionary.index_of(oid)
    closed = set(seed)
    changed = True
    while changed:
        changed = False
        feats = {o.params["index"] for o in dictionary.observables
                 if o.id in closed and o.kind == "coordinate"}
        for obs in dictionary.observables:
            if obs.id in closed:
                continue
            if obs.depends_on <= closed and obs.feature_depends <= feats:
                closed.add(obs.id)
                changed = True
    return frozenset(closed)


def generator_features(dictionary: Dictionary,
                       ids: set[str]) -> frozenset[int]:
    """Raw features a set of observables transitively depends on."""
    pending = list(ids)
    seen_obs: set[str] = set()
    feats: set[int] = set()
    while pending:
        oid = pending.pop()
        if oid in seen_obs:
            continue
        seen_obs.add(oid)
        obs = dictionary.observables[dictionary.index_of(oid)]
        feats.update(obs.feature_depends)
        pending.extend(obs.depends_on)
    return frozenset(feats)


def features_at_columns(data: TrajectorySet, lifted: LiftedPair,
                        features: list[int] | None = None) -> np.ndarray:
    """Raw feature readings aligned with the lifted pair's columns.

    Returns an (h, K) matrix whose column k holds the selected features of
    the snapshot lifted into ``current[:, k]``.
    """
    if features is None:
        features = list(range(data.n_features))
    by_id = {t.id: t for t in data.trajectories}
    out = np.empty((len(features), lifted.n_columns))
    for k, (traj_id, t) in enumerate(lifted.column_origin):
        traj = by_id[traj_id]
        pos = t - traj.snapshots[0].time_index
        out[:, k] = traj.snapshots[pos].values[features]
    return out
