import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from agelab.data import (
    Dataset, in_black_square, load_csv, make_checkerboard, make_gaussian_ring, make_point_mass,
    mode_coverage, render_raster_grid, save_csv, write_rows_csv,
)


def test_degenerate_ring_is_one_blob():
    ds = make_gaussian_ring(1, 0.0, 0.5, 4000, seed=0)
    assert np.allclose(ds.meta["mode_centers"], [[0.0, 0.0]])
    assert np.all(np.abs(ds.samples.mean(axis=0)) < 0.05)


def test_ring_mode_means_and_labels():
    ds = make_gaussian_ring(8, 2.0, 0.02, 8000, seed=1)
    assert np.bincount(ds.labels).tolist() == [1000] * 8
    C = np.array(ds.meta["mode_centers"])
    for k in range(8):
        assert np.linalg.norm(ds.samples[ds.labels == k].mean(axis=0) - C[k]) < 0.01
    ang = np.arctan2(C[:, 1], C[:, 0]) % (2 * np.pi)
    assert np.allclose(ang, 2 * np.pi * np.arange(8) / 8)


def test_ring_rejects_bad_params():
    with pytest.raises(ValueError):
        make_gaussian_ring(8, 2.0, 0.0)
    with pytest.raises(ValueError):
        make_gaussian_ring(0)


def test_generators_deterministic_per_seed():
    for make in (lambda s: make_gaussian_ring(seed=s), lambda s: make_checkerboard(1000, seed=s)):
        assert np.array_equal(make(3).samples, make(3).samples)
        assert not np.any(np.all(make(3).samples[:10] == make(4).samples[:10], axis=1))


def test_point_mass():
    ds = make_point_mass([1.5, -2.0], 10)
    assert np.all(ds.samples == [1.5, -2.0])


def test_checkerboard_membership_and_mean():
    ds = make_checkerboard(20000, seed=0)
    assert in_black_square(ds.samples).mean() >= 0.99
    assert np.all(np.abs(ds.samples.mean(axis=0)) < 0.05)
    assert not in_black_square(np.array([[0.5, -0.5]]))[0]


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), labels=[0, 1])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), labels=[0, 5], meta={"n_modes": 3})


def test_coverage_on_data_itself():
    ds = make_gaussian_ring(8, 2.0, 0.02, 80000, seed=2)
    cov, hq = mode_coverage(ds.samples, ds.meta["mode_centers"], 0.02, threshold=10)
    assert cov == 8
    # 3 sigma containment of a 2-D isotropic Gaussian is 1 - exp(-4.5)
    assert hq == pytest.approx(1 - np.exp(-4.5), abs=0.003)


def test_coverage_trivial_cases():
    C = make_gaussian_ring().meta["mode_centers"]
    assert mode_coverage(np.repeat([C[3]], 100, axis=0), C, 0.02) == (1, 1.0)
    assert mode_coverage(np.full((100, 2), 50.0), C, 0.02) == (0, 0.0)
    with pytest.raises(ValueError):
        mode_coverage(np.zeros((3, 2)), [], 0.02)


def test_coverage_permutation_invariant():
    rng = np.random.default_rng(0)
    ds = make_gaussian_ring(8, 2.0, 0.1, 800, seed=0)
    s = ds.samples + rng.normal(0, 0.1, ds.samples.shape)
    C = np.array(ds.meta["mode_centers"])
    a = mode_coverage(s, C, 0.1)
    assert mode_coverage(s[rng.permutation(len(s))], C[rng.permutation(8)], 0.1) == a


def test_csv_round_trip_with_labels(tmp_path):
    ds = make_gaussian_ring(n=200, seed=0)
    save_csv(ds, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv")
    assert back.samples.tobytes() == ds.samples.tobytes()
    assert np.array_equal(back.labels, ds.labels)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "x0,x1,label"


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_csv_lossless_property(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    save_csv(Dataset(x), path)
    assert load_csv(path).samples.tobytes() == x.tobytes()


def test_csv_errors(tmp_path):
    p = tmp_path / "h.csv"
    write_rows_csv(np.zeros((0, 2)), p, dim=2)
    with pytest.raises(ValueError, match="empty"):
        load_csv(p)
    p.write_text("x0,x1\n1,2\n3\n")
    with pytest.raises(ValueError, match=":3:"):
        load_csv(p)
    p.write_text("x0,x1\n1,2\n3,abc\n")
    with pytest.raises(ValueError, match=":3:"):
        load_csv(p)


def _read_ppm(path):
    raw = path.read_bytes()
    head, w, h, maxval, body = raw.split(maxsplit=4)
    assert head == b"P6" and maxval == b"255"
    return np.frombuffer(body, np.uint8).reshape(int(h), int(w), 3)


@pytest.mark.parametrize("v,expected", [(-1.0, 0), (1.0, 255), (0.0, 128)])
def test_raster_values(tmp_path, v, expected):
    render_raster_grid(np.full((1, 16), v), 4, 4, 1, tmp_path / "a.ppm")
    img = _read_ppm(tmp_path / "a.ppm")
    assert img.shape == (4, 4, 3) and np.all(img == expected)


def test_raster_tiling_and_capacity(tmp_path):
    s = np.stack([np.full(4, -1.0), np.full(4, 1.0), np.zeros(4)])
    render_raster_grid(s, 2, 2, 2, tmp_path / "g.ppm")
    img = _read_ppm(tmp_path / "g.ppm")
    assert img.shape == (4, 4, 3)
    assert img[0, 0, 0] == 0 and img[0, 2, 0] == 255 and img[2, 0, 0] == 128 and img[2, 2, 0] == 0
    with pytest.raises(ValueError):
        render_raster_grid(s, 2, 2, 1, tmp_path / "g.ppm", grid_rows=2)
