"""Pipeline configuration document."""

import copy
import hashlib
import json
from pathlib import Path

from .errors import ParameterError

FULL_SCALE_DEFAULTS = {
    "model": {"n_sites": 30, "gamma": 1.0, "dt": 0.05, "t_max": 10.0},
    "backend": {"name": "mps", "chi_max": 200, "svd_cutoff": 1e-12},
    "master_seed": 0,
    "record": ["density", "heterodyne"],
    "train": {"omegas": [float(w) for w in range(1, 11)], "n_per_omega": 100},
    "eval": {
        "omegas": [1.0, 2.0, 3.0]
        + [4.0 + 0.25 * i for i in range(13)]
        + [8.0, 9.0, 10.0],
        "n_per_omega": 100,
    },
    "features": ["S", "O"],
    "window_time": 0.5,
    "simulation_batch": 100,
    "autoencoder": {
        "hidden_dim": 1000,
        "learning_rate": 0.001,
        "epochs": 20,
        "batch_size": 10,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "seed": 0,
        "shuffle_seed": 1,
        "standardize": False,
    },
    "gmm": {"max_iter": 500, "tol": 1e-8, "restarts": 10, "seed": 0},
    "fit": {
        "intervals": {"S": [6.0, 7.0], "O": [5.5, 7.0]},
        "n_bootstrap": 200,
        "seed": 0,
    },
    "output_dir": "run",
}

FEATURES = ("S", "O")
# keys that only affect where or how fast things run, not the results
_UNHASHED = ("output_dir",)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "intervals":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve(doc):
    """Fill missing keys from the full-scale defaults and validate."""
    unknown = set(doc) - set(FULL_SCALE_DEFAULTS)
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    cfg = _merge(FULL_SCALE_DEFAULTS, doc)
    if cfg["backend"]["name"] not in ("dense", "mps"):
        raise ParameterError(f"unknown backend {cfg['backend']['name']!r}")
    bad = [f for f in cfg["features"] if f not in FEATURES]
    if bad:
        raise ParameterError(f"unknown feature kinds {bad}; choose from {FEATURES}")
    if "O" in cfg["features"] and "heterodyne" not in cfg["record"]:
        raise ParameterError("O features need the heterodyne record")
    if "S" in cfg["features"] and "density" not in cfg["record"]:
        raise ParameterError("S features need the density record")
    for split in ("train", "eval"):
        oms = cfg[split]["omegas"]
        if sorted(set(oms)) != list(oms):
            raise ParameterError(f"{split} omegas must be strictly increasing")
    return cfg


def load(path, overrides=None):
    doc = json.loads(Path(path).read_text())
    if overrides:
        doc = _merge(doc, overrides)
    return resolve(doc)


def config_hash(cfg):
    hashed = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    blob = json.dumps(hashed, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
