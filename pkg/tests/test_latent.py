import numpy as np
import pytest
from scipy.stats import special_ortho_group

from agelab import ndcore as nd
from agelab.latent import project_to_sphere, sample_uniform_sphere, slerp
from agelab.ndcore import DomainError, Tensor

from gradcheck import check


def test_sample_rows_unit_norm():
    z = sample_uniform_sphere(4, 3, seed=7)
    assert z.shape == (4, 3)
    assert np.allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-6)


def test_sample_deterministic_per_seed():
    assert np.array_equal(sample_uniform_sphere(10, 5, 3), sample_uniform_sphere(10, 5, 3))
    assert not np.array_equal(sample_uniform_sphere(10, 5, 3), sample_uniform_sphere(10, 5, 4))


def test_sample_rejects_degenerate_sphere():
    with pytest.raises(ValueError):
        sample_uniform_sphere(4, 1, 0)


def test_sample_moments_monte_carlo():
    z = sample_uniform_sphere(20000, 8, seed=1)
    assert np.all(np.abs(z.mean(axis=0)) < 0.02)
    # E[z_j^2] = 1/M on the sphere
    assert np.all(np.abs(z.var(axis=0) - 1 / 8) < 0.01)


def test_sample_rotation_invariance():
    z = sample_uniform_sphere(20000, 8, seed=1)
    R = special_ortho_group.rvs(8, random_state=3)
    assert np.all(np.abs((z @ R.T).var(axis=0) - z.var(axis=0)) < 0.01)


def test_project_example_and_idempotence():
    out = project_to_sphere(Tensor([[3.0, 4.0]]))
    assert np.allclose(out.data, [[0.6, 0.8]], atol=1e-15)
    u = sample_uniform_sphere(5, 4, 0)
    assert np.allclose(project_to_sphere(Tensor(u)).data, u, atol=1e-12)
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((6, 3)))
    once = project_to_sphere(x).data
    assert np.allclose(project_to_sphere(Tensor(once)).data, once, atol=1e-12)


def test_project_rejects_zero_row_with_index():
    with pytest.raises(DomainError, match="row 1"):
        project_to_sphere(Tensor([[1.0, 0.0], [0.0, 0.0]]))


@pytest.mark.parametrize("seed", range(3))
def test_project_gradient(seed):
    x = np.random.default_rng(seed).standard_normal((2, 3))
    assert check(lambda t: nd.sum(project_to_sphere(t)), [x]) <= 1e-4
    w = np.random.default_rng(seed + 10).standard_normal((2, 3))
    assert check(lambda t: nd.sum(project_to_sphere(t) * Tensor(w)), [x]) <= 1e-4


def test_slerp_endpoints_and_midpoint():
    z1 = np.array([1.0, 0.0, 0.0])
    z2 = np.array([0.0, 1.0, 0.0])
    assert np.allclose(slerp(z1, z2, 0.0), z1, atol=1e-12)
    assert np.allclose(slerp(z1, z2, 1.0), z2, atol=1e-12)
    assert np.allclose(slerp(z1, z2, 0.5), (z1 + z2) / np.sqrt(2), atol=1e-12)


def test_slerp_unit_norm_on_grid():
    z = sample_uniform_sphere(2, 6, 11)
    for t in np.linspace(0, 1, 101):
        assert abs(np.linalg.norm(slerp(z[0], z[1], t)) - 1) <= 1e-9


def test_slerp_rejects_antipodal():
    z = np.array([0.6, 0.8])
    with pytest.raises(DomainError):
        slerp(z, -z, 0.3)


def test_slerp_constant_speed():
    z = sample_uniform_sphere(2, 4, 2)
    pts = np.array([slerp(z[0], z[1], t) for t in np.linspace(0, 1, 11)])
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert np.allclose(steps, steps[0], rtol=1e-9)
