"""File formats: dataset CSV, model JSON, run configuration.

Dataset CSV
    Header row, feature columns ``f1..fp`` (or names chosen in the run
    configuration), an optional ``label`` column where an empty cell or
    ``NA`` marks a missing label, and an optional ``truth`` column.

Model JSON
    ``format_version``, ``fit_type``, ``ncov``, ``g``, ``p``, ``pi``, ``mu``,
    ``sigma`` (list of 1 or g row-major matrices), ``xi`` (``null`` or
    ``{"xi0", "xi1", "covariate"}``), ``objective``, ``converged``,
    ``iterations``.  Reals are written with Python's shortest round-trip
    representation, so load(save(m)) reproduces every value bit for bit.

All writers replace the destination atomically.
"""

import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, fields, replace

import numpy as np

from .fit import FitConfig
from .missingness import MissingnessParams
from .model import GmmParams

FORMAT_VERSION = 1
LABEL_COLUMN = "label"
TRUTH_COLUMN = "truth"
MISSING_TOKENS = ("", "NA")
_FEATURE_RE = re.compile(r"^f(\d+)$")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and ``os.replace``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    label: np.ndarray | None  # 0 = missing
    truth: np.ndarray | None
    feature_names: tuple

    @property
    def n(self):
        return self.y.shape[0]

    def require_labels(self):
        if self.label is None:
            raise DataError("dataset has no 'label' column")
        return self.label

    def require_truth(self):
        if self.truth is None:
            raise DataError("dataset has no 'truth' column")
        return self.truth


def _feature_columns(header, names):
    if names is not None:
        missing = [c for c in names if c not in header]
        if missing:
            raise DataError(f"feature columns not found in header: {', '.join(missing)}")
        return [header.index(c) for c in names]
    numbered = sorted(
        ((int(mt.group(1)), i) for i, c in enumerate(header) if (mt := _FEATURE_RE.match(c))),
    )
    if numbered:
        return [i for _, i in numbered]
    cols = [i for i, c in enumerate(header) if c not in (LABEL_COLUMN, TRUTH_COLUMN)]
    if not cols:
        raise DataError("no feature columns in header")
    return cols


def _parse_label(cell, line, column, allow_missing):
    cell = cell.strip()
    if cell in MISSING_TOKENS:
        if allow_missing:
            return 0
        raise DataError(f"row {line}: missing value in '{column}'")
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"row {line}: '{column}' value {cell!r} is not a number") from None
    if not math.isfinite(v) or v != int(v) or v < 1:
        raise DataError(f"row {line}: '{column}' value {cell!r} is not a positive integer")
    return int(v)


def parse_dataset(text, feature_names=None):
    """Parse dataset CSV text; row numbers in messages are file line numbers."""
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise DataError("empty file")
    header = [c.strip() for c in rows[0]]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    feat = _feature_columns(header, feature_names)
    lab = header.index(LABEL_COLUMN) if LABEL_COLUMN in header else None
    tru = header.index(TRUTH_COLUMN) if TRUTH_COLUMN in header else None
    width = len(header)
    y, labels, truth = [], [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"row {line}: expected {width} fields, found {len(row)}")
        vals = []
        for i in feat:
            try:
                v = float(row[i])
            except ValueError:
                raise DataError(f"row {line}: feature '{header[i]}' value {row[i]!r} is not numeric") from None
            if not math.isfinite(v):
                raise DataError(f"row {line}: feature '{header[i]}' is not finite")
            vals.append(v)
        y.append(vals)
        if lab is not None:
            labels.append(_parse_label(row[lab], line, LABEL_COLUMN, True))
        if tru is not None:
            truth.append(_parse_label(row[tru], line, TRUTH_COLUMN, False))
    if not y:
        raise DataError("no data rows")
    return Dataset(
        y=np.array(y, dtype=float),
        label=np.array(labels, dtype=np.int64) if lab is not None else None,
        truth=np.array(truth, dtype=np.int64) if tru is not None else None,
        feature_names=tuple(header[i] for i in feat),
    )


def read_dataset(path, feature_names=None):
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    return parse_dataset(text, feature_names)


def format_dataset(y, label=None, truth=None, feature_names=None):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    names = list(feature_names) if feature_names else [f"f{k + 1}" for k in range(y.shape[1])]
    header = list(names)
    if truth is not None:
        header.append(TRUTH_COLUMN)
    if label is not None:
        header.append(LABEL_COLUMN)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for j in range(y.shape[0]):
        row = [_fmt(v) for v in y[j]]
        if truth is not None:
            row.append(str(int(truth[j])))
        if label is not None:
            row.append(str(int(label[j])) if label[j] != 0 else "NA")
        w.writerow(row)
    return buf.getvalue()


def write_dataset(path, y, label=None, truth=None, feature_names=None):
    atomic_write_text(path, format_dataset(y, label, truth, feature_names))


def write_predictions(path, pred, tau, ent):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["predicted"] + [f"tau{i + 1}" for i in range(tau.shape[1])] + ["entropy"])
    for j in range(pred.shape[0]):
        w.writerow([str(int(pred[j]))] + [_fmt(t) for t in tau[j]] + [_fmt(ent[j])])
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# model files


@dataclass(frozen=True, eq=False)
class ModelFile:
    fit_type: str
    theta: GmmParams
    xi: MissingnessParams | None = None
    objective: float | None = None
    converged: bool = True
    iterations: int = 0

    @classmethod
    def from_report(cls, report):
        return cls(
            fit_type=report.fit_type,
            theta=report.theta,
            xi=report.xi,
            objective=float(report.objective),
            converged=bool(report.converged),
            iterations=int(report.iterations),
        )

    def to_dict(self):
        t = self.theta
        return {
            "format_version": FORMAT_VERSION,
            "fit_type": self.fit_type,
            "ncov": t.ncov,
            "g": t.g,
            "p": t.p,
            "pi": [float(v) for v in t.pi],
            "mu": t.mu.tolist(),
            "sigma": t.sigma.tolist(),
            "xi": None
            if self.xi is None
            else {"xi0": float(self.xi.xi0), "xi1": float(self.xi.xi1), "covariate": self.xi.covariate},
            "objective": None if self.objective is None else float(self.objective),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    @classmethod
    def from_dict(cls, d):
        required = {"format_version", "fit_type", "ncov", "g", "p", "pi", "mu", "sigma"}
        optional = {"xi", "objective", "converged", "iterations"}
        if not isinstance(d, dict):
            raise DataError("model file must hold a JSON object")
        absent = required - d.keys()
        if absent:
            raise DataError(f"model file lacks fields: {', '.join(sorted(absent))}")
        extra = d.keys() - required - optional
        if extra:
            raise DataError(f"model file has unknown fields: {', '.join(sorted(extra))}")
        if d["format_version"] != FORMAT_VERSION:
            raise DataError(f"unsupported model format_version {d['format_version']!r}")
        g, p, ncov = d["g"], d["p"], d["ncov"]
        sigma = np.asarray(d["sigma"], dtype=float)
        mu = np.asarray(d["mu"], dtype=float)
        k = 1 if ncov == 1 else g
        if ncov not in (1, 2) or sigma.shape != (k, p, p):
            raise DataError(f"sigma has shape {sigma.shape}, expected {(k, p, p)} for ncov={ncov}")
        if mu.shape != (g, p) or len(d["pi"]) != g:
            raise DataError("pi/mu shapes do not match g and p")
        try:
            theta = GmmParams(np.asarray(d["pi"], dtype=float), mu, sigma)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise DataError(f"invalid model parameters: {exc}") from None
        xi = d.get("xi")
        if xi is not None:
            try:
                xi = MissingnessParams(float(xi["xi0"]), float(xi["xi1"]), xi.get("covariate", "log"))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"invalid xi block: {exc}") from None
        obj = d.get("objective")
        return cls(
            fit_type=d["fit_type"],
            theta=theta,
            xi=xi,
            objective=None if obj is None else float(obj),
            converged=bool(d.get("converged", True)),
            iterations=int(d.get("iterations", 0)),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def same_as(self, other):
        """Exact equality of every stored value."""
        return self.to_dict() == other.to_dict()


def save_model(path, model):
    if not isinstance(model, ModelFile):
        model = ModelFile.from_report(model)
    atomic_write_text(path, model.dumps())


def load_model(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None
    return ModelFile.from_dict(d)


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# run configuration

_FIT_FIELDS = tuple(f.name for f in fields(FitConfig))
_RUN_FIELDS = ("g", "data", "out_model", "init", "feature_columns", "threads", "strict")


@dataclass(frozen=True)
class RunConfig:
    """Fit controls plus run-level settings; built from a JSON object whose
    keys are the field names below (snake or kebab case)."""

    fit: FitConfig = FitConfig()
    g: int | None = None
    data: str | None = None
    out_model: str | None = None
    init: str = "auto"
    feature_columns: tuple | None = None
    threads: int = 1
    strict: bool = False

    def __post_init__(self):
        if self.g is not None and (not isinstance(self.g, int) or self.g < 2):
            raise ValueError("g must be an integer of at least 2")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ValueError("threads must be a positive integer")

    @classmethod
    def from_mapping(cls, mapping):
        if not isinstance(mapping, dict):
            raise ValueError("configuration must be a JSON object")
        norm = {str(k).replace("-", "_"): v for k, v in mapping.items()}
        unknown = sorted(set(norm) - set(_FIT_FIELDS) - set(_RUN_FIELDS))
        if unknown:
            raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
        fit_kw = {k: norm[k] for k in _FIT_FIELDS if k in norm}
        run_kw = {k: norm[k] for k in _RUN_FIELDS if k in norm}
        if run_kw.get("feature_columns") is not None:
            run_kw["feature_columns"] = tuple(run_kw["feature_columns"])
        return cls(fit=FitConfig(**fit_kw), **run_kw)

    def merged(self, **overrides):
        """Copy with non-``None`` overrides applied (fit fields go to ``fit``)."""
        fit_kw = {k: v for k, v in overrides.items() if k in _FIT_FIELDS and v is not None}
        run_kw = {k: v for k, v in overrides.items() if k in _RUN_FIELDS and v is not None}
        bad = set(overrides) - set(_FIT_FIELDS) - set(_RUN_FIELDS)
        if bad:
            raise ValueError(f"unknown configuration keys: {', '.join(sorted(bad))}")
        return replace(self, fit=replace(self.fit, **fit_kw), **run_kw)


def load_run_config(path):
    try:
        with open(path) as fh:
            return RunConfig.from_mapping(json.load(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None
