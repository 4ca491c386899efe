import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajphase.dataset import (
    FORMAT_VERSION,
    KIND_DENSITY,
    KIND_HETERODYNE,
    KIND_WINDOWED,
    DatasetManifest,
    ManifestEntry,
    SlidingAbsAverage,
    assemble_features,
    density_features,
    read_array,
    read_header,
    read_trajectory,
    sliding_abs_average,
    unflatten,
    write_array,
    write_trajectory,
)
from trajphase.errors import (
    BadMagicError,
    DatasetError,
    TruncatedPayloadError,
    TrajectoryFormatError,
    VersionMismatchError,
)
from trajphase.model import ModelParams
from trajphase.noise import NoiseStream
from trajphase.records import TrajectoryRecord


def make_record(n=3, n_steps=20, omega=2.5, tid=4, seed=1):
    rng = np.random.default_rng(seed)
    p = ModelParams(n, omega, dt=0.05, t_max=n_steps * 0.05, seed=seed)
    dens = rng.uniform(size=(n_steps + 1, n))
    het = rng.normal(size=(n_steps, n)) + 1j * rng.normal(size=(n_steps, n))
    return TrajectoryRecord(p, tid, seed, dens, het)


def test_full_scale_window_arithmetic():
    het = np.zeros((200, 30), dtype=complex)
    out = sliding_abs_average(het, 0.05, 0.5)
    assert out.shape == (191, 30)
    assert out.size == 5730
    assert density_features(np.zeros((201, 30))).size == 6000


def test_constant_record():
    c = 0.3 - 1.7j
    out = sliding_abs_average(np.full((40, 2), c * 0.05), 0.05, 0.5)
    assert np.allclose(out, abs(c))


def test_window_matches_direct_sum():
    rng = np.random.default_rng(0)
    het = rng.normal(size=(30, 2)) + 1j * rng.normal(size=(30, 2))
    out = sliding_abs_average(het, 0.1, 0.4)
    direct = np.array([np.abs(het[j:j + 4].sum(axis=0)) / 0.4 for j in range(27)])
    assert np.allclose(out, direct)


def test_window_errors():
    with pytest.raises(DatasetError):
        sliding_abs_average(np.zeros((5, 1)), 0.05, 0.5)
    with pytest.raises(DatasetError):
        sliding_abs_average(np.zeros((5, 1)), 0.05, 0.01)


def test_pure_noise_windows_against_gaussian_oracle():
    dt, w = 0.05, 10
    n_windows = 10**4
    het = NoiseStream(31, 0).block(n_windows * w, 1, dt)
    # non-overlapping windows so the samples are independent
    averaged = sliding_abs_average(het, dt, w * dt)[::w, 0]
    rng = np.random.default_rng(5)
    var = 1.0 / (w * dt)
    z = rng.normal(scale=np.sqrt(var / 2), size=(10**6, 2))
    oracle = np.mean(np.hypot(z[:, 0], z[:, 1]))
    assert abs(averaged.mean() / oracle - 1) < 0.02
    assert abs(oracle / np.sqrt(np.pi * var / 4) - 1) < 0.005


@settings(max_examples=30, deadline=None)
@given(phi=st.floats(0, 2 * np.pi), seed=st.integers(0, 2**31))
def test_global_phase_invariance(phi, seed):
    rng = np.random.default_rng(seed)
    het = rng.normal(size=(25, 3)) + 1j * rng.normal(size=(25, 3))
    a = sliding_abs_average(het, 0.05, 0.25)
    b = sliding_abs_average(het * np.exp(1j * phi), 0.05, 0.25)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 6), t=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_flatten_is_bijective(n, t, seed):
    rows = np.random.default_rng(seed).uniform(size=(t + 1, n))
    flat = density_features(rows)
    assert np.array_equal(unflatten(flat, n), rows[1:])
    assert np.array_equal(unflatten(density_features(rows, include_initial=True), n), rows)


def _manifest_with(tmp_path, records, kind):
    entries = []
    for r in records:
        name = f"t{r.trajectory_id}_{kind}.qtrj"
        write_trajectory(tmp_path / name, r, kind)
        entries.append(ManifestEntry(name, r.params.omega, kind, r.trajectory_id))
    return entries


def test_layout_fixture(tmp_path):
    rec = make_record(n=2, n_steps=3)
    S = rec.densities
    entries = _manifest_with(tmp_path, [rec], KIND_DENSITY)
    man = DatasetManifest(entries, root=tmp_path)
    fm = assemble_features(man, KIND_DENSITY)
    expected = [S[1, 0], S[1, 1], S[2, 0], S[2, 1], S[3, 0], S[3, 1]]
    assert fm.X.shape == (1, 6)
    assert np.array_equal(fm.X[0], expected)
    full = assemble_features(man, KIND_DENSITY, include_initial=True)
    assert np.array_equal(full.X[0], [S[0, 0], S[0, 1]] + expected)
    assert fm.omega[0] == rec.params.omega


def test_mixing_kinds_is_rejected(tmp_path):
    rec = make_record()
    entries = _manifest_with(tmp_path, [rec], KIND_DENSITY)
    win = sliding_abs_average(rec.het_increments, 0.05, 0.25)
    write_array(tmp_path / "w.qtrj", _windowed_header(rec, win), win)
    entries.append(ManifestEntry("w.qtrj", rec.params.omega, KIND_WINDOWED, rec.trajectory_id))
    with pytest.raises(DatasetError, match="mix"):
        assemble_features(DatasetManifest(entries, root=tmp_path), None)


def _windowed_header(rec, win):
    from trajphase.dataset import TrajectoryHeader

    p = rec.params
    return TrajectoryHeader(p.n_sites, win.shape[0], p.dt, p.omega, p.gamma, rec.master_seed, rec.trajectory_id, KIND_WINDOWED)


def test_heterogeneous_shapes_are_rejected(tmp_path):
    entries = _manifest_with(tmp_path, [make_record(n_steps=10, tid=1), make_record(n_steps=12, tid=2)], KIND_DENSITY)
    with pytest.raises(DatasetError, match="t1_0.qtrj"):
        assemble_features(DatasetManifest(entries, root=tmp_path), KIND_DENSITY)


@pytest.mark.parametrize("kind", [KIND_DENSITY, KIND_HETERODYNE])
def test_round_trip_bit_identical(tmp_path, kind):
    rec = make_record()
    path = tmp_path / "r.qtrj"
    write_trajectory(path, rec, kind)
    header, params, arr = read_trajectory(path)
    src = rec.densities if kind == KIND_DENSITY else rec.het_increments
    assert arr.dtype == src.dtype
    assert arr.tobytes() == src.tobytes()
    assert params == rec.params
    assert (header.trajectory_id, header.master_seed, header.kind) == (4, 1, kind)


def test_file_errors(tmp_path):
    rec = make_record()
    path = tmp_path / "r.qtrj"
    write_trajectory(path, rec, KIND_HETERODYNE)
    raw = path.read_bytes()

    (tmp_path / "trunc.qtrj").write_bytes(raw[:-8])
    with pytest.raises(TruncatedPayloadError):
        read_array(tmp_path / "trunc.qtrj")

    (tmp_path / "magic.qtrj").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(BadMagicError):
        read_array(tmp_path / "magic.qtrj")

    bumped = raw[:4] + (FORMAT_VERSION + 1).to_bytes(2, "little") + raw[6:]
    (tmp_path / "ver.qtrj").write_bytes(bumped)
    with pytest.raises(VersionMismatchError):
        read_header(tmp_path / "ver.qtrj")

    (tmp_path / "long.qtrj").write_bytes(raw + b"\0" * 8)
    with pytest.raises(TrajectoryFormatError):
        read_array(tmp_path / "long.qtrj")

    (tmp_path / "short.qtrj").write_bytes(raw[:10])
    with pytest.raises(TrajectoryFormatError):
        read_header(tmp_path / "short.qtrj")


def test_manifest_save_load_and_verify(tmp_path):
    recs = [make_record(tid=i, omega=1.0 + i) for i in range(3)]
    entries = _manifest_with(tmp_path, recs, KIND_DENSITY)
    man = DatasetManifest(entries, {"window": 10}, 60)
    man.save(tmp_path / "manifest.json")
    loaded = DatasetManifest.load(tmp_path / "manifest.json")
    assert [e.to_dict() for e in loaded.entries] == [e.to_dict() for e in entries]
    assert loaded.feature_dim == 60

    (tmp_path / entries[1].path).unlink()
    with pytest.raises(DatasetError, match="missing"):
        DatasetManifest.load(tmp_path / "manifest.json")

    write_trajectory(tmp_path / entries[1].path, make_record(tid=99, omega=2.0), KIND_DENSITY)
    with pytest.raises(DatasetError, match="does not match"):
        DatasetManifest.load(tmp_path / "manifest.json")


def test_transformer_wrapper():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(4, 200, 3)) + 1j * rng.normal(size=(4, 200, 3))
    t = SlidingAbsAverage(dt=0.05, window_time=0.5).fit(X)
    out = t.transform(X)
    assert out.shape == (4, 191 * 3) == (4, t.n_features_out_)
    assert np.array_equal(out[1], sliding_abs_average(X[1], 0.05, 0.5).reshape(-1))
    assert t.get_params() == {"dt": 0.05, "window_time": 0.5, "flatten": True}
