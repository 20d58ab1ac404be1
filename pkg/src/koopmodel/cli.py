"""Command-line front end: ``koop fit|predict|spectrum|reduce``.

Exit codes: 0 success, 2 malformed input (data, config, or model file),
3 numerical failure.  All output files are written atomically after the
computation finishes, so a failed command never leaves partial results.

Input data is CSV with a ``trajectory_id`` column, an integer ``t``
column, and one column per feature; rows of a trajectory are contiguous
and sorted by ``t``.  The observable dictionary is a JSON list of
``{id, kind, params, depends_on}`` entries; its canonical hash is stored
in model files and checked by ``predict``/``reduce`` so a model is never
combined with a different dictionary.

``KOOP_THREADS`` caps BLAS/FFT parallelism; it is applied before the
numerical libraries load, and explicitly set library-specific variables
(e.g. ``OMP_NUM_THREADS``) still win.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError, KoopmodelError, NumericalError

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_TOLERANCE_KEYS = ("svd_tolerance", "zero_threshold", "closure_tol",
                   "peak_threshold")
_INPUT_PATH_KEYS = ("data", "dictionary", "model")


def _apply_thread_cap() -> None:
    cap = os.environ.get("KOOP_THREADS")
    if not cap:
        return
    if not cap.isdigit() or int(cap) < 1:
        raise InputError(f"KOOP_THREADS must be a positive integer, "
                         f"got {cap!r}")
    for var in _THREAD_VARS:
        os.environ.setdefault(var, cap)


def fmt(value) -> str:
    """Fixed 17-significant-digit rendering; round-trip safe for doubles."""
    return format(float(value), ".17g")


@dataclass
class RunConfig:
    """Merged file + command-line options for one command."""

    options: dict = field(default_factory=dict)

    @classmethod
    def load(cls, args) -> "RunConfig":
        options: dict = {}
        if args.config is not None:
            path = Path(args.config)
            if not path.is_file():
                raise InputError(f"config file not found: {path}")
            try:
                loaded = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise InputError(f"config file {path} is not valid JSON: "
                                 f"{exc}") from exc
            if not isinstance(loaded, dict):
                raise InputError("config file must hold a JSON object")
            options.update(loaded)
            # Relative paths in the config resolve against its directory.
            base = path.parent
            for key in _INPUT_PATH_KEYS + ("out", "report", "text_out"):
                if isinstance(options.get(key), str):
                    options[key] = str((base / options[key]))
        if args.tol is not None:
            options["svd_tolerance"] = args.tol
        if args.threshold is not None:
            options["threshold"] = args.threshold
        if args.out is not None:
            options["out"] = args.out
        config = cls(options)
        config._validate()
        return config

    def _validate(self) -> None:
        for key in _TOLERANCE_KEYS + ("threshold",):
            if key in self.options:
                value = self.options[key]
                if not isinstance(value, (int, float)) or value <= 0:
                    raise InputError(f"config option {key!r} must be a "
                                     f"positive number, got {value!r}")
        for key in _INPUT_PATH_KEYS:
            value = self.options.get(key)
            if isinstance(value, str) and not Path(value).is_file():
                raise InputError(f"config option {key!r} references a "
                                 f"missing file: {value}")

    def require(self, key: str, kind: str = "option"):
        if key not in self.options:
            raise InputError(f"missing required {kind} {key!r} "
                             f"(set it in the --config file)")
        return self.options[key]

    def get(self, key: str, default=None):
        return self.options.get(key, default)

    def tolerance(self, key: str, default: float) -> float:
        value = self.options.get(key, self.options.get("threshold", default))
        if not isinstance(value, (int, float)) or value <= 0:
            raise InputError(f"{key} must be a positive number, got {value!r}")
        return float(value)


@contextlib.contextmanager
def _stage(name: str):
    """Prefix any package error raised inside with the pipeline stage."""
    try:
        yield
    except KoopmodelError as exc:
        raise type(exc)(f"{name}: {exc}") from exc


class _OutputSet:
    """Collects rendered outputs, then publishes them all atomically."""

    def __init__(self):
        self._pending: list[tuple[Path, bytes]] = []

    def add_text(self, path, text: str) -> None:
        self._pending.append((Path(path), text.encode()))

    def add_bytes(self, path, payload: bytes) -> None:
        self._pending.append((Path(path), payload))

    def publish(self) -> None:
        staged = []
        try:
            for path, payload in self._pending:
                fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                                           prefix=path.name, suffix=".tmp")
                with os.fdopen(fd, "wb") as handle:
                    handle.write(payload)
                staged.append((tmp, path))
            while staged:
                tmp, path = staged[0]
                os.replace(tmp, path)
                staged.pop(0)
        finally:
            for tmp, _ in staged:
                with contextlib.suppress(OSError):
                    os.unlink(tmp)


def read_trajectories(path):
    """Parse the trajectory CSV into a TrajectorySet plus feature names."""
    from .trajectories import Snapshot, Trajectory, TrajectorySet

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read data file {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    rows = [row for row in rows if row and any(cell.strip() for cell in row)]
    if not rows:
        raise InputError(f"data file {path} is empty")
    header = [cell.strip() for cell in rows[0]]
    for required in ("trajectory_id", "t"):
        if required not in header:
            raise InputError(f"data file {path} lacks required column "
                             f"{required!r}")
    id_col = header.index("trajectory_id")
    t_col = header.index("t")
    feature_names = [name for i, name in enumerate(header)
                     if i not in (id_col, t_col)]
    if not feature_names:
        raise InputError(f"data file {path} has no feature columns")
    feature_cols = [i for i in range(len(header)) if i not in (id_col, t_col)]
    if len(rows) == 1:
        raise InputError(f"data file {path} has a header but no data rows")

    groups: dict[str, list] = {}
    order: list[str] = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"{path}:{line_no}: expected {len(header)} "
                             f"columns, got {len(row)}")
        traj_id = row[id_col].strip()
        try:
            t = int(row[t_col])
        except ValueError as exc:
            raise InputError(f"{path}:{line_no}: t must be an integer, "
                             f"got {row[t_col]!r}") from exc
        values = []
        for col in feature_cols:
            try:
                values.append(float(row[col]))
            except ValueError as exc:
                raise InputError(
                    f"{path}:{line_no}: column {header[col]!r} is not a "
                    f"number: {row[col]!r}"
                ) from exc
        if traj_id not in groups:
            groups[traj_id] = []
            order.append(traj_id)
        elif order[-1] != traj_id:
            raise InputError(f"{path}:{line_no}: rows of trajectory "
                             f"{traj_id!r} are not contiguous")
        groups[traj_id].append(Snapshot(values=values, time_index=t))

    trajectories = [Trajectory(snapshots=tuple(groups[tid]), id=tid)
                    for tid in order]
    data = TrajectorySet(trajectories=tuple(trajectories),
                         feature_names=tuple(feature_names))
    return data, data.feature_names


def read_dictionary(path, n_features: int):
    from .dictionary import Dictionary

    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read dictionary file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"dictionary file {path} is not valid JSON: "
                         f"{exc}") from exc
    if isinstance(entries, dict) and "observables" in entries:
        entries = entries["observables"]
    if not isinstance(entries, list):
        raise InputError(f"dictionary file {path} must hold a JSON list "
                         f"of observable entries")
    return Dictionary.from_spec(entries, n_features)


def _csv_text(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _complex_pairs(values):
    return [[z.real, z.imag] for z in values]


def _fit_pipeline(config: RunConfig):
    """Shared fit path: data -> dictionary -> lifted pair -> matrix."""
    from .dictionary import features_at_columns, lift_trajectories
    from .edmd import (DEFAULT_SVD_TOL, fit_koopman_matrix, residual_report)

    with _stage("reading data"):
        data, feature_names = read_trajectories(config.require("data", "input"))
    with _stage("reading dictionary"):
        dictionary = read_dictionary(config.require("dictionary", "input"),
                                     data.n_features)
    with _stage("lifting"):
        lifted = lift_trajectories(dictionary, data)
        outputs = features_at_columns(data, lifted)
    with _stage("fitting"):
        tol = config.tolerance("svd_tolerance", DEFAULT_SVD_TOL)
        fitted = fit_koopman_matrix(lifted, tol)
        residuals = residual_report(lifted, fitted)
    return data, feature_names, dictionary, lifted, outputs, fitted, residuals


def cmd_fit(config: RunConfig) -> int:
    from .edmd import condition_number
    from .model_io import _encode, export_model_json
    from .spectral import ModelMetadata, build_spectral_triple, eigendecompose

    (data, feature_names, dictionary, lifted, outputs, fitted,
     residuals) = _fit_pipeline(config)
    with _stage("eigendecomposition"):
        system = eigendecompose(fitted)
    metadata = ModelMetadata(
        dict_hash=dictionary.spec_hash(),
        feature_names=feature_names,
        output_names=feature_names,
        trajectory_ids=data.trajectory_ids,
    )
    with _stage("building spectral triple"):
        triple = build_spectral_triple(system, lifted, outputs, metadata,
                                       fitted.svd_tolerance)

    from .representation import DEFAULT_CLOSURE_TOL

    closure_tol = config.tolerance("closure_tol", DEFAULT_CLOSURE_TOL)
    report = {
        "command": "fit",
        "n_observables": fitted.dim,
        "n_outputs": len(feature_names),
        "n_trajectories": len(data.trajectory_ids),
        "n_snapshot_pairs": lifted.n_columns,
        "svd_tolerance": fitted.svd_tolerance,
        "rank_used": fitted.rank_used,
        "fit_residual": fitted.fit_residual,
        "condition_number": condition_number(lifted, fitted.svd_tolerance),
        "matrix": [[float(x) for x in row] for row in fitted.matrix],
        "row_residuals": {oid: float(residuals[i])
                          for i, oid in enumerate(dictionary.ids)},
        "closed_rows": [oid for i, oid in enumerate(dictionary.ids)
                        if residuals[i] < closure_tol],
        "closure_tol": closure_tol,
        "eigenvalues": _complex_pairs(triple.eigenvalues),
        "biorthogonality_error": system.biorthogonality_error,
    }

    outputs_set = _OutputSet()
    model_path = config.require("out", "output path")
    with _stage("serializing model"):
        outputs_set.add_bytes(model_path, _encode(triple))
    report_path = config.get("report")
    if report_path:
        outputs_set.add_text(report_path,
                             json.dumps(report, sort_keys=True, indent=2) + "\n")
    outputs_set.publish()
    if config.get("json_sidecar"):
        export_model_json(triple, str(model_path) + ".json")

    not_closed = [oid for oid in dictionary.ids
                  if oid not in report["closed_rows"]]
    print(f"fitted {fitted.dim}x{fitted.dim} operator from "
          f"{lifted.n_columns} snapshot pairs "
          f"({len(data.trajectory_ids)} trajectories)")
    print(f"rank {fitted.rank_used}, fit residual {fmt(fitted.fit_residual)}, "
          f"condition number {fmt(report['condition_number'])}")
    top = triple.eigenvalues[:min(5, triple.n_eigenvalues)]
    print("leading eigenvalues: "
          + ", ".join(f"{z.real:+.6f}{z.imag:+.6f}j" for z in top))
    if not_closed:
        print("rows without linear closure: " + ", ".join(not_closed))
    else:
        print("all rows linearly closed")
    print(f"model written to {model_path}")
    return 0


def _resolve_x0(triple, selector) -> int:
    ids = triple.metadata.trajectory_ids
    if isinstance(selector, bool):
        raise InputError(f"x0 selector must be an id or index, "
                         f"got {selector!r}")
    if isinstance(selector, int):
        if not 0 <= selector < triple.n_initial_conditions:
            raise InputError(
                f"x0 index {selector} out of range "
                f"(model has {triple.n_initial_conditions} initial "
                f"conditions)"
            )
        return selector
    if isinstance(selector, str):
        if selector in ids:
            return ids.index(selector)
        raise InputError(
            f"unknown trajectory id {selector!r}; model knows "
            f"{list(ids)}"
        )
    raise InputError(f"x0 selector must be an id or index, got {selector!r}")


def cmd_predict(config: RunConfig) -> int:
    import numpy as np

    from .model_io import load_model
    from .spectral import predict

    with _stage("loading model"):
        triple = load_model(config.require("model", "input"))
    horizon = config.get("horizon", 10)
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 0:
        raise InputError(f"horizon must be a non-negative integer, "
                         f"got {horizon!r}")
    x0 = _resolve_x0(triple, config.get("x0", 0))

    names = triple.metadata.output_names or tuple(
        f"y{i}" for i in range(triple.n_outputs)
    )
    rows = []
    with _stage("predicting"):
        for k in range(horizon + 1):
            values = np.asarray(predict(triple, x0, k))
            rows.append([str(k)] + [fmt(v.real if np.iscomplexobj(values)
                                        else v) for v in values])
    text = _csv_text(["k"] + list(names), rows)

    out = config.get("out")
    if out:
        outputs_set = _OutputSet()
        outputs_set.add_text(out, text)
        outputs_set.publish()
        print(f"wrote {horizon + 1} prediction rows to {out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_spectrum(config: RunConfig) -> int:
    from .harmonic import find_eigenfrequencies

    with _stage("reading data"):
        data, feature_names = read_trajectories(config.require("data", "input"))
    column = config.require("column", "series selector")
    if column not in feature_names:
        raise InputError(f"column {column!r} not in data "
                         f"(features: {list(feature_names)})")
    traj_id = config.get("trajectory")
    if traj_id is None:
        if len(data.trajectory_ids) > 1:
            raise InputError("data holds multiple trajectories; select one "
                             "with the 'trajectory' option")
        traj_id = data.trajectory_ids[0]
    with _stage("selecting series"):
        trajectory = data.trajectory(traj_id)
        series = trajectory.feature_series(data.feature_index(column))

    threshold = config.tolerance("peak_threshold", 0.1)
    refine = bool(config.get("refine", True))
    with _stage("analyzing spectrum"):
        peaks = find_eigenfrequencies(series, peak_threshold=threshold,
                                      refine=refine)

    rows = [[fmt(p.omega), fmt(p.amplitude),
             fmt(p.eigenvalue.real), fmt(p.eigenvalue.imag),
             fmt(p.average.real), fmt(p.average.imag)] for p in peaks]
    text = _csv_text(
        ["omega", "amplitude", "eigenvalue_re", "eigenvalue_im",
         "average_re", "average_im"],
        rows,
    )
    out = config.get("out")
    if out:
        outputs_set = _OutputSet()
        outputs_set.add_text(out, text)
        outputs_set.publish()
        print(f"wrote {len(peaks)} detected frequencies to {out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_reduce(config: RunConfig) -> int:
    from .model_io import load_model
    from .representation import (DEFAULT_CLOSURE_TOL, DEFAULT_ZERO_THRESHOLD,
                                 analyze_representation)

    (data, feature_names, dictionary, lifted, outputs, fitted,
     residuals) = _fit_pipeline(config)
    model_path = config.get("model")
    if model_path:
        with _stage("loading model"):
            triple = load_model(model_path)
        if triple.metadata.dict_hash != dictionary.spec_hash():
            raise InputError(
                "dictionary does not match the model file (the model was "
                "fitted with a different dictionary configuration)"
            )

    threshold = config.tolerance("zero_threshold", DEFAULT_ZERO_THRESHOLD)
    closure_tol = config.tolerance("closure_tol", DEFAULT_CLOSURE_TOL)
    max_seed = config.get("max_seed_size", 3)
    if not isinstance(max_seed, int) or isinstance(max_seed, bool) or max_seed < 1:
        raise InputError(f"max_seed_size must be a positive integer, "
                         f"got {max_seed!r}")
    with _stage("analyzing representation"):
        report = analyze_representation(
            fitted, residuals, dictionary,
            zero_threshold=threshold,
            closure_tol=closure_tol,
            lifted=lifted,
            max_seed_size=max_seed,
            full_enumeration=bool(config.get("full_enumeration", False)),
        )

    doc = report.as_dict()
    doc.update({
        "command": "reduce",
        "zero_threshold": threshold,
        "closure_tol": closure_tol,
        "matrix": [[float(x) for x in row] for row in fitted.matrix],
        "row_residuals": {oid: float(residuals[i])
                          for i, oid in enumerate(dictionary.ids)},
    })
    out = config.get("out")
    if out or config.get("text_out"):
        outputs_set = _OutputSet()
        if out:
            outputs_set.add_text(out, json.dumps(doc, sort_keys=True,
                                                 indent=2) + "\n")
        if config.get("text_out"):
            outputs_set.add_text(config.get("text_out"),
                                 report.narrative + "\n")
        outputs_set.publish()
    print(report.narrative)
    if out:
        print(f"report written to {out}")
    return 0


_COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "spectrum": cmd_spectrum,
    "reduce": cmd_reduce,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koop",
        description="Data-driven Koopman-operator modeling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    help_text = {
        "fit": "fit a lifted linear operator and save the spectral model",
        "predict": "roll a saved model forward with the spectral expansion",
        "spectrum": "detect unit-circle eigenvalues of a series by FFT",
        "reduce": "discover reduced linear/nonlinear representations",
    }
    for name in _COMMANDS:
        p = sub.add_parser(name, help=help_text[name])
        p.add_argument("--config", metavar="PATH",
                       help="JSON file with inputs and options")
        p.add_argument("--tol", type=float, metavar="X",
                       help="singular-value cutoff for pseudoinverses")
        p.add_argument("--threshold", type=float, metavar="X",
                       help="zero threshold (reduce) or peak threshold "
                            "(spectrum)")
        p.add_argument("--out", metavar="PATH",
                       help="primary output path")
    return parser


def main(argv=None) -> int:
    try:
        _apply_thread_cap()
        args = _build_parser().parse_args(argv)
        config = RunConfig.load(args)
        return _COMMANDS[args.command](config)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
