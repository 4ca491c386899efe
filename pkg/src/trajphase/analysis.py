"""Phase-probability curves and power-law fits near the crossover."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import autoencoder as ae
from . import clustering
from .dataset import assemble_features
from .errors import DatasetError, FitConvergenceError, FitError, ReportError

S_FEATURE_INTERVAL = (6.0, 7.0)
O_FEATURE_INTERVAL = (5.5, 7.0)
DEGENERATE_BETA = 1e-2
MIN_POINTS = 4


@dataclass
class PhaseCurve:
    omegas: np.ndarray
    mean_p: np.ndarray
    std_error: np.ndarray
    n_trajectories: np.ndarray
    samples: list = field(default=None, repr=False)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.mean_p = np.asarray(self.mean_p, dtype=float)
        self.std_error = np.asarray(self.std_error, dtype=float)
        self.n_trajectories = np.asarray(self.n_trajectories, dtype=int)
        if np.any(np.diff(self.omegas) <= 0):
            raise DatasetError("curve omegas must be strictly increasing")
        if np.any(self.std_error < 0):
            raise DatasetError("negative standard error")

    def __len__(self):
        return len(self.omegas)

    @classmethod
    def from_samples(cls, omegas, samples):
        order = np.argsort(omegas)
        omegas = np.asarray(omegas, dtype=float)[order]
        samples = [np.asarray(samples[i], dtype=float) for i in order]
        mean = np.array([s.mean() for s in samples])
        se = np.array([s.std(ddof=1) / np.sqrt(len(s)) if len(s) > 1 else 0.0 for s in samples])
        n = np.array([len(s) for s in samples])
        return cls(omegas, mean, se, n, samples)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["omega", "mean_p", "stderr", "n"])
        for row in zip(self.omegas, self.mean_p, self.std_error, self.n_trajectories):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            [float(r["omega"]) for r in rows],
            [float(r["mean_p"]) for r in rows],
            [float(r["stderr"]) for r in rows],
            [int(r["n"]) for r in rows],
        )


def classify_features(ae_model, gmm_model, X, omegas):
    """Per-trajectory active-phase probabilities grouped into a curve."""
    Z = ae.encode(ae_model, X)
    p = clustering.p_active(gmm_model, Z)
    values = np.unique(omegas)
    samples = [p[omegas == v] for v in values]
    return PhaseCurve.from_samples(values, samples), Z, p


def sweep_classify(ae_model, gmm_model, manifest, kind, split="eval", expected_omegas=None):
    """Encode every evaluation trajectory and average ``p_active`` per omega.

    Neither model is modified.
    """
    fm = assemble_features(manifest, kind, split)
    if expected_omegas is not None:
        present = set(np.round(fm.omega, 12))
        missing = [w for w in expected_omegas if round(float(w), 12) not in present]
        if missing:
            raise DatasetError(f"no evaluation trajectories for omega values {missing}")
    curve, _, _ = classify_features(ae_model, gmm_model, fm.X, fm.omega)
    return curve


# power law


def power_law(omega, amplitude, omega_c, beta):
    """``A * (omega - omega_c)**beta`` above ``omega_c``, zero below."""
    u = np.clip(np.asarray(omega, dtype=float) - omega_c, 0.0, None)
    return amplitude * u**beta


@dataclass
class PowerLawFit:
    omega_c: float
    beta: float
    amplitude: float
    interval: tuple
    rss: float
    n_points: int
    uncertainties: dict = field(default_factory=dict)
    confidence_intervals: dict = field(default_factory=dict)
    n_bootstrap: int = 0
    n_bootstrap_failed: int = 0
    degenerate: bool = False

    def predict(self, omega):
        return power_law(omega, self.amplitude, self.omega_c, self.beta)

    def to_dict(self):
        d = asdict(self)
        d["interval"] = list(self.interval)
        d["confidence_intervals"] = {k: list(v) for k, v in self.confidence_intervals.items()}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["interval"] = tuple(d["interval"])
        d["confidence_intervals"] = {k: tuple(v) for k, v in d["confidence_intervals"].items()}
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _grid_stage(w, p, grid_size):
    """Log-log linear fits over a grid of ``omega_c``; returns candidates sorted by RSS."""
    span = w.max() - w.min()
    hi = np.sort(w)[-3]
    lo = w.min() - 2.0 * span
    wc = np.linspace(lo, hi, grid_size, endpoint=False)
    u = w[None, :] - wc[:, None]
    mask = (u > 0) & (p[None, :] > 0)
    x = np.where(mask, np.log(np.where(u > 0, u, 1.0)), 0.0)
    y = np.where(mask, np.log(np.where(p > 0, p, 1.0))[None, :], 0.0)
    cnt = mask.sum(axis=1)
    sx, sy = x.sum(axis=1), y.sum(axis=1)
    sxx, sxy = (x * x).sum(axis=1), (x * y).sum(axis=1)
    den = cnt * sxx - sx**2
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = (cnt * sxy - sx * sy) / den
        log_a = (sy - beta * sx) / cnt
    ok = (cnt >= 3) & np.isfinite(beta) & (np.abs(den) > 1e-300)
    beta = np.where(ok, beta, np.nan)
    amp = np.exp(np.where(ok, log_a, 0.0))
    pred = amp[:, None] * np.where(u > 0, np.where(u > 0, u, 1.0) ** beta[:, None], 0.0)
    rss = np.sum((pred - p[None, :]) ** 2, axis=1)
    rss = np.where(ok & (beta > 0) & np.isfinite(rss), rss, np.inf)
    return wc, amp, beta, rss, lo


def _fit_arrays(w, p, grid_size=400):
    """Coarse grid plus bounded least-squares refinement of ``(A, omega_c, beta)``."""
    wc, amp, beta, rss, lo = _grid_stage(w, p, grid_size)
    if not np.any(np.isfinite(rss)):
        # no increasing structure: the best admissible model is the beta -> 0 limit
        mean = float(np.mean(p))
        return mean, float(lo), 0.0, float(np.sum((p - mean) ** 2))
    i = int(np.argmin(rss))
    best = (float(amp[i]), float(wc[i]), float(beta[i]), float(rss[i]))

    def residuals(theta):
        return power_law(w, *theta) - p

    def jacobian(theta):
        a, c, b = theta
        u = w - c
        pos = u > 0
        up = np.where(pos, u, 1.0)
        ub = np.where(pos, up**b, 0.0)
        return np.column_stack(
            [
                ub,
                np.where(pos, -a * b * up ** (b - 1.0), 0.0),
                np.where(pos, a * ub * np.log(up), 0.0),
            ]
        )

    upper_c = float(np.sort(w)[-2])
    x0 = np.array([best[0], min(best[1], upper_c - 1e-9), max(best[2], 1e-6)])
    try:
        res = least_squares(
            residuals,
            x0,
            jac=jacobian,
            bounds=([1e-12, lo, 1e-6], [np.inf, upper_c, 20.0]),
            xtol=1e-12,
            ftol=1e-12,
            gtol=1e-12,
            max_nfev=2000,
            method="trf",
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitConvergenceError(f"refinement failed: {exc}", best) from exc
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitConvergenceError(f"refinement did not converge: {res.message}", best)
    refined_rss = float(np.sum(res.fun**2))
    if refined_rss <= best[3]:
        return float(res.x[0]), float(res.x[1]), float(res.x[2]), refined_rss
    return best


def _interval_mask(omegas, interval):
    lo, hi = interval
    return (omegas >= lo - 1e-12) & (omegas <= hi + 1e-12)


def fit_power_law(curve, interval=S_FEATURE_INTERVAL, n_bootstrap=200, seed=0, grid_size=400):
    """Fit ``p = A (omega - omega_c)**beta`` to curve points inside ``interval``.

    Uncertainties are bootstrap standard deviations; resamples redraw the
    per-trajectory assignments of every omega when the curve carries them,
    and otherwise jitter each point by its standard error. Confidence
    intervals are the 2.5/97.5 percentiles.
    """
    mask = _interval_mask(curve.omegas, interval)
    n_points = int(mask.sum())
    if n_points < MIN_POINTS:
        raise FitError(f"need at least {MIN_POINTS} curve points in {interval}, found {n_points}")
    w = curve.omegas[mask]
    p = curve.mean_p[mask]
    a, c, b, rss = _fit_arrays(w, p, grid_size)

    rng = np.random.default_rng(seed)
    samples = None
    if curve.samples is not None:
        samples = [s for s, keep in zip(curve.samples, mask) if keep]
    boots = []
    failed = 0
    for _ in range(n_bootstrap):
        if samples is not None:
            pb = np.array([s[rng.integers(0, len(s), len(s))].mean() for s in samples])
        else:
            pb = p + rng.normal(0.0, 1.0, size=p.shape) * curve.std_error[mask]
        try:
            boots.append(_fit_arrays(w, pb, grid_size)[:3])
        except FitError:
            failed += 1
    unc, ci = {}, {}
    if len(boots) >= 2:
        boots = np.array(boots)
        for j, name in enumerate(("amplitude", "omega_c", "beta")):
            unc[name] = float(np.std(boots[:, j], ddof=1))
            lo, hi = np.percentile(boots[:, j], [2.5, 97.5])
            ci[name] = (float(lo), float(hi))
    return PowerLawFit(
        omega_c=c,
        beta=b,
        amplitude=a,
        interval=(float(interval[0]), float(interval[1])),
        rss=rss,
        n_points=n_points,
        uncertainties=unc,
        confidence_intervals=ci,
        n_bootstrap=n_bootstrap,
        n_bootstrap_failed=failed,
        degenerate=bool(b < DEGENERATE_BETA),
    )


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Estimator form of :func:`fit_power_law`.

    ``fit(omega, p)`` takes the curve points directly; pass ``samples`` (one
    array of per-trajectory values per point) to bootstrap from them.
    """

    def __init__(self, interval=S_FEATURE_INTERVAL, n_bootstrap=200, grid_size=400, random_state=0):
        self.interval = interval
        self.n_bootstrap = n_bootstrap
        self.grid_size = grid_size
        self.random_state = random_state

    def fit(self, X, y, samples=None, std_error=None):
        omegas = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float)
        order = np.argsort(omegas)
        se = np.zeros_like(y) if std_error is None else np.asarray(std_error, dtype=float)
        n = np.ones(len(y), dtype=int)
        if samples is not None:
            samples = [samples[i] for i in order]
            n = np.array([len(s) for s in samples])
        curve = PhaseCurve(omegas[order], y[order], se[order], n, samples)
        self.fit_ = fit_power_law(curve, self.interval, self.n_bootstrap, self.random_state, self.grid_size)
        self.omega_c_ = self.fit_.omega_c
        self.beta_ = self.fit_.beta
        self.amplitude_ = self.fit_.amplitude
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return self.fit_.predict(np.asarray(X, dtype=float).reshape(-1))


# reporting


def _svg_plot(path, curve, fit, latent, p_latent):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "trajphase"
    has_latent = latent is not None
    fig, axes = plt.subplots(1, 2 if has_latent else 1, figsize=(10 if has_latent else 5, 4))
    axes = np.atleast_1d(axes)
    ax = axes[0]
    ax.errorbar(curve.omegas, curve.mean_p, yerr=curve.std_error, fmt="o", ms=3, label="mean p_active")
    if fit is not None:
        grid = np.linspace(curve.omegas.min(), curve.omegas.max(), 400)
        ax.plot(grid, fit.predict(grid), "-", label=f"fit: omega_c={fit.omega_c:.3g}, beta={fit.beta:.3g}")
        ax.axvspan(*fit.interval, alpha=0.1)
    ax.set_xlabel("Omega / gamma")
    ax.set_ylabel("p_active")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8)
    if has_latent:
        sc = axes[1].scatter(latent[:, 0], latent[:, 1], c=p_latent, s=6, cmap="coolwarm", vmin=0, vmax=1)
        axes[1].set_xlabel("z1")
        axes[1].set_ylabel("z2")
        fig.colorbar(sc, ax=axes[1], label="p_active")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(curve, fit, output_dir, latent=None, p_latent=None, prefix=""):
    """Write ``phase_curve.csv``, ``power_law_fit.json`` and ``report.svg``."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "curve": out / f"{prefix}phase_curve.csv",
            "fit": out / f"{prefix}power_law_fit.json",
            "plot": out / f"{prefix}report.svg",
        }
        paths["curve"].write_text(curve.to_csv())
        if fit is not None:
            paths["fit"].write_text(fit.to_json())
        else:
            del paths["fit"]
        _svg_plot(paths["plot"], curve, fit, latent, p_latent)
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return paths
