"""Trajectory files, manifests and feature assembly.

Binary layout of a trajectory file (all little-endian)::

    magic        4s   b"QTRJ"
    version      u16
    n_sites      u32
    n_steps      u32  number of integration steps (kinds 0, 1) or of
                      complete windows (kind 2)
    dt           f64
    omega        f64
    gamma        f64
    master_seed  u64
    trajectory_id u64
    kind         u8   0 density, 1 heterodyne increments, 2 |windowed current|
    payload      f64[rows * n_sites] (complex: interleaved re, im), row-major
                 rows = n_steps + 1 (kind 0) or n_steps (kinds 1, 2)
"""

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    BadMagicError,
    DatasetError,
    TruncatedPayloadError,
    TrajectoryFormatError,
    VersionMismatchError,
)
from .model import ModelParams

MAGIC = b"QTRJ"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIdddQQB")

KIND_DENSITY = 0
KIND_HETERODYNE = 1
KIND_WINDOWED = 2
KIND_NAMES = {KIND_DENSITY: "density", KIND_HETERODYNE: "heterodyne", KIND_WINDOWED: "windowed"}

MANIFEST_VERSION = 1


@dataclass
class TrajectoryHeader:
    n_sites: int
    n_steps: int
    dt: float
    omega: float
    gamma: float
    master_seed: int
    trajectory_id: int
    kind: int
    version: int = FORMAT_VERSION

    @property
    def rows(self):
        return self.n_steps + 1 if self.kind == KIND_DENSITY else self.n_steps

    @property
    def is_complex(self):
        return self.kind == KIND_HETERODYNE


def _payload_for(record, kind):
    if kind == KIND_DENSITY:
        return record.densities, record.het_increments.shape[0]
    if kind == KIND_HETERODYNE:
        return record.het_increments, record.het_increments.shape[0]
    raise DatasetError(f"records hold kinds 0 and 1 only, got {kind}")


def write_array(path, header, array):
    """Write ``array`` of shape ``(header.rows, header.n_sites)``."""
    array = np.asarray(array)
    if array.shape != (header.rows, header.n_sites):
        raise DatasetError(f"array shape {array.shape} does not match header")
    if header.is_complex:
        payload = np.ascontiguousarray(array, dtype="<c16").view("<f8")
    else:
        payload = np.ascontiguousarray(array, dtype="<f8")
    head = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        header.n_sites,
        header.n_steps,
        header.dt,
        header.omega,
        header.gamma,
        header.master_seed,
        header.trajectory_id,
        header.kind,
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(head)
        fh.write(payload.tobytes())
    os.replace(tmp, path)


def write_trajectory(path, record, kind):
    array, n_steps = _payload_for(record, kind)
    p = record.params
    header = TrajectoryHeader(
        p.n_sites, n_steps, p.dt, p.omega, p.gamma, record.master_seed, record.trajectory_id, kind
    )
    write_array(path, header, array)
    return header


def read_header(path):
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    return _parse_header(raw, path)


def _parse_header(raw, path):
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a trajectory file")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: truncated header")
    magic, version, n, steps, dt, omega, gamma, seed, tid, kind = _HEADER.unpack(raw)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if kind not in KIND_NAMES:
        raise TrajectoryFormatError(f"{path}: unknown kind {kind}")
    return TrajectoryHeader(n, steps, dt, omega, gamma, seed, tid, kind, version)


def read_array(path):
    """Return ``(header, array)`` for any trajectory file."""
    data = Path(path).read_bytes()
    header = _parse_header(data[: _HEADER.size], path)
    body = data[_HEADER.size :]
    width = 2 if header.is_complex else 1
    expected = header.rows * header.n_sites * width * 8
    if len(body) < expected:
        raise TruncatedPayloadError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    if len(body) > expected:
        raise TrajectoryFormatError(f"{path}: {len(body) - expected} trailing bytes")
    values = np.frombuffer(body, dtype="<f8")
    if header.is_complex:
        values = values.view("<c16")
    return header, values.reshape(header.rows, header.n_sites).astype(values.dtype.newbyteorder("="))


def read_trajectory(path):
    """Read a trajectory file; returns ``(header, params, array)``.

    ``params`` is reconstructed with ``t_max = n_steps * dt`` for kinds 0 and
    1 and is ``None`` for windowed files.
    """
    header, array = read_array(path)
    params = None
    if header.kind != KIND_WINDOWED:
        params = ModelParams(
            n_sites=header.n_sites,
            omega=header.omega,
            gamma=header.gamma,
            dt=header.dt,
            t_max=header.n_steps * header.dt,
            seed=header.master_seed,
        )
    return header, params, array


# windowed heterodyne average


def window_length(dt, window_time):
    return int(round(window_time / dt))


def sliding_abs_average(het_increments, dt, window_time):
    """``|mean current|`` over every complete window of length ``window_time``.

    Row ``j`` averages steps ``j .. j+w-1``; the output has ``n_steps - w + 1``
    rows.
    """
    het = np.asarray(het_increments)
    w = window_length(dt, window_time)
    n_steps = het.shape[-2]
    if w < 1:
        raise DatasetError(f"window {window_time} shorter than one step of {dt}")
    if w > n_steps:
        raise DatasetError(f"window of {w} steps is longer than the record ({n_steps} steps)")
    csum = np.cumsum(het, axis=-2)
    zero = np.zeros(het.shape[:-2] + (1, het.shape[-1]), dtype=csum.dtype)
    csum = np.concatenate([zero, csum], axis=-2)
    sums = csum[..., w:, :] - csum[..., :-w, :]
    return np.abs(sums) / (w * dt)


def density_features(densities, include_initial=False):
    """Flatten density rows time-major, site index fastest; t = 0 dropped by default."""
    rows = densities if include_initial else densities[..., 1:, :]
    return rows.reshape(rows.shape[:-2] + (-1,))


def unflatten(features, n_sites):
    features = np.asarray(features)
    return features.reshape(features.shape[:-1] + (-1, n_sites))


class SlidingAbsAverage(TransformerMixin, BaseEstimator):
    """Windowed absolute heterodyne current as flattened feature rows.

    ``X`` is an array of complex increments with shape
    ``(n_trajectories, n_steps, n_sites)``.
    """

    def __init__(self, dt=0.05, window_time=0.5, flatten=True):
        self.dt = dt
        self.window_time = window_time
        self.flatten = flatten

    def fit(self, X, y=None):
        X = np.asarray(X)
        if X.ndim != 3:
            raise DatasetError("expected (n_trajectories, n_steps, n_sites) increments")
        self.window_ = window_length(self.dt, self.window_time)
        self.n_sites_ = X.shape[2]
        self.n_features_out_ = (X.shape[1] - self.window_ + 1) * X.shape[2]
        return self

    def transform(self, X):
        check_is_fitted(self, "window_")
        out = sliding_abs_average(np.asarray(X), self.dt, self.window_time)
        if self.flatten:
            out = out.reshape(out.shape[0], -1)
        return out


# manifests


@dataclass
class ManifestEntry:
    path: str
    omega: float
    kind: int
    trajectory_id: int
    split: str = "train"

    def to_dict(self):
        return {
            "path": self.path,
            "omega": self.omega,
            "kind": self.kind,
            "trajectory_id": self.trajectory_id,
            "split": self.split,
        }


@dataclass
class DatasetManifest:
    """JSON index of trajectory files; paths are relative to the manifest."""

    entries: list = field(default_factory=list)
    preprocessing: dict = None
    feature_dim: int = None
    root: Path = None

    def resolve(self, entry):
        p = Path(entry.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def select(self, kind=None, split=None):
        return [
            e
            for e in self.entries
            if (kind is None or e.kind == kind) and (split is None or e.split == split)
        ]

    def to_dict(self):
        return {
            "format": "trajphase-manifest",
            "version": MANIFEST_VERSION,
            "preprocessing": self.preprocessing,
            "feature_dim": self.feature_dim,
            "entries": [e.to_dict() for e in self.entries],
        }

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        self.root = path.parent

    @classmethod
    def load(cls, path, verify=True):
        path = Path(path)
        doc = json.loads(path.read_text())
        if doc.get("format") != "trajphase-manifest":
            raise DatasetError(f"{path}: not a dataset manifest")
        if doc.get("version") != MANIFEST_VERSION:
            raise DatasetError(f"{path}: manifest version {doc.get('version')} unsupported")
        entries = [ManifestEntry(**e) for e in doc["entries"]]
        out = cls(entries, doc.get("preprocessing"), doc.get("feature_dim"), path.parent)
        if verify:
            out.verify()
        return out

    def verify(self):
        """Check that every listed file exists and agrees with its entry."""
        bad = []
        for e in self.entries:
            f = self.resolve(e)
            if not f.exists():
                bad.append(f"{e.path}: missing")
                continue
            h = read_header(f)
            if h.kind != e.kind or h.trajectory_id != e.trajectory_id or h.omega != e.omega:
                bad.append(f"{e.path}: header does not match manifest entry")
        if bad:
            more = f" (and {len(bad) - 10} more)" if len(bad) > 10 else ""
            raise DatasetError("manifest check failed: " + "; ".join(bad[:10]) + more)


@dataclass
class FeatureMatrix:
    X: np.ndarray
    omega: np.ndarray
    trajectory_id: np.ndarray
    n_sites: int


def assemble_features(manifest, kind, split=None, include_initial=False):
    """Stack matching trajectories into a feature matrix, one row each.

    Density files lose their ``t = 0`` row unless ``include_initial``;
    heterodyne files are stored as-is (use windowed files for features).
    """
    entries = manifest.select(kind, split)
    if not entries:
        raise DatasetError(f"no trajectories of kind {kind} in manifest")
    kinds = {e.kind for e in manifest.select(None, split)}
    if kind is None and len(kinds) > 1:
        raise DatasetError(f"cannot mix kinds {sorted(kinds)} in one feature matrix")
    rows, shapes = [], {}
    for e in entries:
        header, array = read_array(manifest.resolve(e))
        shapes.setdefault((header.n_sites, header.n_steps, header.dt, header.kind), []).append(e.path)
        if header.kind == KIND_DENSITY:
            rows.append(density_features(array, include_initial))
        elif header.kind == KIND_HETERODYNE:
            rows.append(array.reshape(-1))
        else:
            rows.append(array.reshape(-1))
    if len(shapes) > 1:
        detail = "; ".join(f"{k}: {v[:3]}" for k, v in shapes.items())
        raise DatasetError(f"heterogeneous trajectories: {detail}")
    X = np.stack(rows)
    if not np.all(np.isfinite(X)):
        raise DatasetError("non-finite feature entries")
    return FeatureMatrix(
        X,
        np.array([e.omega for e in entries]),
        np.array([e.trajectory_id for e in entries]),
        next(iter(shapes))[0],
    )


def standardize(X):
    """Optional zero-mean, unit-variance scaling per column (off by default in the pipeline)."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd
