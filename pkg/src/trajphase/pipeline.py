"""Stage-wise pipeline: simulate, preprocess, train, cluster, sweep, fit, report.

Every stage writes its artifacts under the run directory together with a
provenance record holding the config hash and the SHA-256 of its inputs and
outputs. A stage refuses to run when an upstream artifact is missing or its
hash no longer matches the upstream record.
"""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, autoencoder as ae, clustering, dataset as ds, dense, mps
from .config import config_hash
from .errors import CapabilityError, FitError, MissingArtifactError, ProvenanceError
from .model import ModelParams

log = logging.getLogger("trajphase")

STAGES = ("simulate", "preprocess", "train", "cluster", "sweep", "fit", "report")
UPSTREAM = {
    "preprocess": ("simulate",),
    "train": ("simulate", "preprocess"),
    "cluster": ("train",),
    "sweep": ("train", "cluster"),
    "fit": ("sweep",),
    "report": ("sweep", "fit"),
}
KIND_OF_RECORD = {"density": ds.KIND_DENSITY, "heterodyne": ds.KIND_HETERODYNE}


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    def __init__(self, cfg, output_dir=None, threads=1):
        self.cfg = cfg
        self.root = Path(output_dir or cfg["output_dir"])
        self.threads = max(1, int(threads))
        self.hash = config_hash(cfg)

    def path(self, *parts):
        return self.root.joinpath(*parts)

    def rel(self, p):
        return Path(p).relative_to(self.root).as_posix()

    # provenance

    def _prov_path(self, stage):
        return self.path("provenance", f"{stage}.json")

    def record(self, stage, inputs, outputs):
        doc = {
            "stage": stage,
            "config_hash": self.hash,
            "code_version": __version__,
            "inputs": {self.rel(p): sha256(p) for p in sorted(inputs)},
            "outputs": {self.rel(p): sha256(p) for p in sorted(outputs)},
        }
        self._prov_path(stage).parent.mkdir(parents=True, exist_ok=True)
        self._prov_path(stage).write_text(json.dumps(doc, indent=1, sort_keys=True))
        log.info("stage complete", extra={"stage": stage, "outputs": len(outputs)})

    def require(self, stage):
        """Verify ``stage`` ran under this config and its outputs are intact."""
        for up in UPSTREAM.get(stage, ()):
            prov = self._prov_path(up)
            if not prov.exists():
                raise MissingArtifactError(f"stage {stage!r} needs the outputs of {up!r}; run --stage {up} first")
            doc = json.loads(prov.read_text())
            if doc["config_hash"] != self.hash:
                raise ProvenanceError(f"outputs of {up!r} were produced with a different config; rerun --stage {up}")
            for rel, digest in doc["outputs"].items():
                p = self.path(rel)
                if not p.exists():
                    raise MissingArtifactError(f"{rel} from stage {up!r} is missing; rerun --stage {up}")
                if sha256(p) != digest:
                    raise ProvenanceError(f"{rel} does not match the hash recorded by stage {up!r}")

    # helpers

    def params(self, omega):
        m = self.cfg["model"]
        return ModelParams(
            n_sites=m["n_sites"],
            omega=float(omega),
            gamma=m["gamma"],
            dt=m["dt"],
            t_max=m["t_max"],
            seed=self.cfg["master_seed"],
        )

    def plan(self):
        """Deterministic ``(split, omega, trajectory_id)`` list for both splits."""
        out, tid = [], 0
        for split in ("train", "eval"):
            for omega in self.cfg[split]["omegas"]:
                for _ in range(self.cfg[split]["n_per_omega"]):
                    out.append((split, float(omega), tid))
                    tid += 1
        return out

    def traj_path(self, split, tid, record):
        return self.path("data", split, f"traj_{tid:07d}_{record}.qtrj")


def _expected_header(run, omega, tid, kind):
    p = run.params(omega)
    return ds.TrajectoryHeader(p.n_sites, p.n_steps, p.dt, p.omega, p.gamma, run.cfg["master_seed"], tid, kind)


def _header_matches(path, expected):
    try:
        return ds.read_header(path) == expected
    except (OSError, ds.TrajectoryFormatError):
        return False


def stage_simulate(run):
    cfg = run.cfg
    backend = cfg["backend"]
    n = cfg["model"]["n_sites"]
    if backend["name"] == "dense" and n > dense.DENSE_LIMIT:
        raise CapabilityError(
            f"dense backend supports at most {dense.DENSE_LIMIT} sites (config has {n}); "
            "set backend.name to 'mps'"
        )
    records = cfg["record"]
    seed = cfg["master_seed"]
    todo = {}
    entries = []
    for split, omega, tid in run.plan():
        complete = True
        for rec in records:
            path = run.traj_path(split, tid, rec)
            entries.append(ds.ManifestEntry(f"{split}/{path.name}", omega, KIND_OF_RECORD[rec], tid, split))
            if not _header_matches(path, _expected_header(run, omega, tid, KIND_OF_RECORD[rec])):
                complete = False
        if not complete:
            todo.setdefault(omega, []).append((split, tid))
    for split in ("train", "eval"):
        run.path("data", split).mkdir(parents=True, exist_ok=True)

    def write(record, split):
        for rec in records:
            ds.write_trajectory(run.traj_path(split, record.trajectory_id, rec), record, KIND_OF_RECORD[rec])

    def do_group(omega):
        jobs = todo[omega]
        params = run.params(omega)
        if backend["name"] == "dense":
            size = cfg["simulation_batch"]
            for start in range(0, len(jobs), size):
                chunk = jobs[start : start + size]
                recs = dense.simulate_batch(params, [t for _, t in chunk], seed)
                for (split, _), r in zip(chunk, recs):
                    write(r, split)
        else:
            for split, tid in jobs:
                r = mps.simulate_trajectory_mps(params, tid, seed, backend["chi_max"], backend["svd_cutoff"])
                write(r, split)
        return omega, len(jobs)

    skipped = len(run.plan()) - sum(len(v) for v in todo.values())
    log.info("simulate", extra={"to_run": sum(len(v) for v in todo.values()), "resumed": skipped})
    with ThreadPoolExecutor(max_workers=run.threads) as pool:
        for omega, count in pool.map(do_group, sorted(todo)):
            log.info("omega done", extra={"omega": omega, "trajectories": count})
    manifest = ds.DatasetManifest(entries)
    manifest.save(run.path("data", "manifest.json"))
    outputs = [run.path("data", "manifest.json")] + [manifest.resolve(e) for e in entries]
    run.record("simulate", [], outputs)
    return manifest


def stage_preprocess(run):
    run.require("preprocess")
    cfg = run.cfg
    outputs = []
    if "O" in cfg["features"]:
        src = ds.DatasetManifest.load(run.path("data", "manifest.json"))
        dt = cfg["model"]["dt"]
        w = ds.window_length(dt, cfg["window_time"])
        out_dir = run.path("features", "windowed")
        out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        feature_dim = None
        for e in src.select(ds.KIND_HETERODYNE):
            header, het = ds.read_array(src.resolve(e))
            values = ds.sliding_abs_average(het, header.dt, cfg["window_time"])
            h2 = ds.TrajectoryHeader(
                header.n_sites, values.shape[0], header.dt, header.omega, header.gamma,
                header.master_seed, header.trajectory_id, ds.KIND_WINDOWED,
            )
            target = out_dir / f"traj_{e.trajectory_id:07d}_windowed.qtrj"
            ds.write_array(target, h2, values)
            feature_dim = values.size
            entries.append(ds.ManifestEntry(f"windowed/{target.name}", e.omega, ds.KIND_WINDOWED, e.trajectory_id, e.split))
            outputs.append(target)
        manifest = ds.DatasetManifest(entries, {"window_length": w, "window_time": cfg["window_time"], "stride": 1}, feature_dim)
        manifest.save(run.path("features", "manifest_windowed.json"))
        outputs.append(run.path("features", "manifest_windowed.json"))
    run.record("preprocess", [run.path("data", "manifest.json")], outputs)


def _features(run, feature, split):
    if feature == "S":
        manifest = ds.DatasetManifest.load(run.path("data", "manifest.json"))
        return ds.assemble_features(manifest, ds.KIND_DENSITY, split)
    manifest = ds.DatasetManifest.load(run.path("features", "manifest_windowed.json"))
    return ds.assemble_features(manifest, ds.KIND_WINDOWED, split)


def _maybe_standardize(run, fm):
    if run.cfg["autoencoder"]["standardize"]:
        fm.X = ds.standardize(fm.X)
    return fm


def stage_train(run):
    run.require("train")
    a = run.cfg["autoencoder"]
    run.path("models").mkdir(parents=True, exist_ok=True)
    outputs, inputs = [], []
    for feature in run.cfg["features"]:
        fm = _maybe_standardize(run, _features(run, feature, "train"))
        d = fm.X.shape[1]
        model = ae.init_model((d, a["hidden_dim"], ae.LATENT_DIM, a["hidden_dim"], d), a["seed"])
        config = ae.TrainConfig(
            a["learning_rate"], a["epochs"], a["batch_size"], a["beta1"], a["beta2"], a["epsilon"], a["shuffle_seed"]
        )
        _, history, _ = ae.train(model, fm.X, config)
        log.info("trained", extra={"feature": feature, "first_loss": history[0], "last_loss": history[-1]})
        ck, lh = run.path("models", f"ae_{feature}.qaem"), run.path("models", f"loss_{feature}.csv")
        ae.save_checkpoint(ck, model)
        ae.save_loss_history(lh, history)
        outputs += [ck, lh]
    run.record("train", inputs, outputs)


def stage_cluster(run):
    run.require("cluster")
    g = run.cfg["gmm"]
    outputs = []
    for feature in run.cfg["features"]:
        model = ae.load_checkpoint(run.path("models", f"ae_{feature}.qaem"))
        fm = _maybe_standardize(run, _features(run, feature, "train"))
        Z = ae.encode(model, fm.X)
        gmm = clustering.fit_gmm(Z, g["max_iter"], g["tol"], g["restarts"], g["seed"])
        gmm = clustering.assign_active_label(gmm, Z, fm.omega)
        target = run.path("models", f"gmm_{feature}.json")
        target.write_text(gmm.to_json())
        outputs.append(target)
    run.record("cluster", [], outputs)


def stage_sweep(run):
    run.require("sweep")
    run.path("sweep").mkdir(parents=True, exist_ok=True)
    outputs, inputs = [], []
    for feature in run.cfg["features"]:
        ck, gm = run.path("models", f"ae_{feature}.qaem"), run.path("models", f"gmm_{feature}.json")
        model = ae.load_checkpoint(ck)
        gmm = clustering.GmmModel.from_json(gm.read_text())
        fm = _maybe_standardize(run, _features(run, feature, "eval"))
        missing = sorted(set(run.cfg["eval"]["omegas"]) - set(fm.omega.tolist()))
        if missing:
            raise MissingArtifactError(f"no evaluation trajectories for omega {missing}; rerun --stage simulate")
        curve, Z, p = analysis.classify_features(model, gmm, fm.X, fm.omega)
        cpath = run.path("sweep", f"curve_{feature}.csv")
        apath = run.path("sweep", f"assignments_{feature}.npz")
        cpath.write_text(curve.to_csv())
        with open(apath, "wb") as fh:
            np.savez(fh, omega=fm.omega, trajectory_id=fm.trajectory_id, latent=Z, p_active=p)
        outputs += [cpath, apath]
        inputs += [ck, gm]
    run.record("sweep", inputs, outputs)


def _load_curve(run, feature):
    with np.load(run.path("sweep", f"assignments_{feature}.npz")) as data:
        omega, p, Z = data["omega"], data["p_active"], data["latent"]
    values = np.unique(omega)
    curve = analysis.PhaseCurve.from_samples(values, [p[omega == v] for v in values])
    return curve, Z, p


def stage_fit(run):
    run.require("fit")
    f = run.cfg["fit"]
    run.path("fit").mkdir(parents=True, exist_ok=True)
    outputs = []
    for feature in run.cfg["features"]:
        curve, _, _ = _load_curve(run, feature)
        interval = f["intervals"][feature]
        fit = analysis.fit_power_law(curve, interval, f["n_bootstrap"], f["seed"])
        if fit.degenerate:
            log.warning("degenerate power-law fit", extra={"feature": feature, "beta": fit.beta})
        doc = {"config_hash": run.hash, "feature": feature, "fit": fit.to_dict()}
        target = run.path("fit", f"fit_{feature}.json")
        target.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        outputs.append(target)
    run.record("fit", [], outputs)


def stage_report(run):
    run.require("report")
    outputs = []
    for feature in run.cfg["features"]:
        curve, Z, p = _load_curve(run, feature)
        doc = json.loads(run.path("fit", f"fit_{feature}.json").read_text())
        fit = analysis.PowerLawFit.from_dict(doc["fit"])
        paths = analysis.emit_report(curve, fit, run.path("report"), Z, p, prefix=f"{feature}_")
        outputs += list(paths.values())
    run.record("report", [], outputs)


STAGE_FUNCS = {
    "simulate": stage_simulate,
    "preprocess": stage_preprocess,
    "train": stage_train,
    "cluster": stage_cluster,
    "sweep": stage_sweep,
    "fit": stage_fit,
    "report": stage_report,
}


def run_stages(cfg, stages=STAGES, output_dir=None, threads=1):
    run = Run(cfg, output_dir, threads)
    run.root.mkdir(parents=True, exist_ok=True)
    (run.root / "config.resolved.json").write_text(json.dumps(cfg, indent=1, sort_keys=True))
    for stage in stages:
        log.info("stage start", extra={"stage": stage})
        STAGE_FUNCS[stage](run)
    return run
