import numpy as np
import pytest

from refsde.coefficients import (
    CATALOG,
    CoefficientField,
    check_linear_growth,
    check_lipschitz,
    make_coefficients,
)


def field_1d(sigma_fn, drift_fn, name="test"):
    return CoefficientField(
        name=name, dim=1,
        diffusion=lambda t, x: sigma_fn(x)[..., None],
        drift=lambda t, x: drift_fn(x),
    )


# -- linear growth -----------------------------------------------------------

def test_growth_constant_unit_diffusion():
    f = field_1d(lambda x: np.ones_like(x), lambda x: np.zeros_like(x))
    rep = check_linear_growth(f, 1.0, samples=20_000, box_radius=10.0,
                              rng_seed=0)
    assert rep.passed and rep.max_ratio <= 1.0


def test_growth_linear_diffusion_passes_at_one():
    f = field_1d(lambda x: x, lambda x: np.zeros_like(x))
    rep = check_linear_growth(f, 1.0, samples=20_000, box_radius=10.0,
                              rng_seed=1)
    assert rep.passed  # x^2 / (1 + x^2) < 1


def test_growth_quadratic_diffusion_fails_near_edge():
    f = field_1d(lambda x: x ** 2, lambda x: np.zeros_like(x))
    rep = check_linear_growth(f, 1.0, samples=50_000, box_radius=10.0,
                              rng_seed=2)
    assert not rep.passed
    t, x = rep.violating_point
    # Direct oracle: the ratio x^4 / (1 + x^2) at the reported point
    # exceeds the constant, and the maximizer sits near the box edge.
    assert x[0] ** 4 / (1.0 + x[0] ** 2) > 1.0
    assert abs(x[0]) > 9.0
    assert rep.max_ratio == pytest.approx(
        x[0] ** 4 / (1.0 + x[0] ** 2), rel=1e-12)


def test_growth_rejects_nonfinite_output():
    f = field_1d(lambda x: np.where(np.abs(x) > 5, np.inf, 1.0),
                 lambda x: np.zeros_like(x))
    with pytest.raises(ValueError, match="non-finite"):
        check_linear_growth(f, 1.0, samples=1000, box_radius=10.0, rng_seed=0)


# -- Lipschitz ----------------------------------------------------------------

def test_lipschitz_sine_passes_at_one():
    f = field_1d(np.sin, lambda x: np.zeros_like(x))
    rep = check_lipschitz(f, 1.0, samples=20_000, box_radius=10.0, rng_seed=3)
    assert rep.passed


def test_lipschitz_sign_fails():
    # The sup quotient is infinite; the sampled check certifies failure up
    # to the pair resolution it can actually find.
    f = field_1d(np.sign, lambda x: np.zeros_like(x))
    rep = check_lipschitz(f, 1000.0, samples=50_000, box_radius=10.0,
                          rng_seed=4)
    assert not rep.passed
    t, x, y = rep.violating_pair
    assert x[0] * y[0] <= 0  # pair straddles the discontinuity at zero


def test_lipschitz_linear_pair_exact_quotient():
    f = field_1d(lambda x: 2.0 * x, lambda x: x)
    rep = check_lipschitz(f, 5.0, samples=20_000, box_radius=10.0, rng_seed=5)
    assert rep.passed
    assert rep.max_quotient == pytest.approx(5.0, rel=1e-9)


# -- catalog ------------------------------------------------------------------

def test_catalog_names_and_dims():
    assert set(CATALOG) == {"ou1d", "gbm-box", "quadrant2d", "schmidt1d"}
    for name, entry in CATALOG.items():
        field = make_coefficients(name)
        assert field.dim == entry.dim
        assert field.growth_constant is not None


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_growth_with_declared_constant(name):
    field = make_coefficients(name)
    rep = check_linear_growth(field, field.growth_constant, samples=100_000,
                              box_radius=10.0, rng_seed=6)
    assert rep.passed, rep


@pytest.mark.parametrize(
    "name", sorted(n for n, e in CATALOG.items() if "lipschitz" in e.tags))
def test_catalog_lipschitz_with_declared_constant(name):
    field = make_coefficients(name)
    rep = check_lipschitz(field, field.lipschitz_constant, samples=100_000,
                          box_radius=10.0, rng_seed=7)
    assert rep.passed, rep


def test_schmidt_is_discontinuous():
    field = make_coefficients("schmidt1d")
    assert "discontinuous" in CATALOG["schmidt1d"].tags
    assert field.lipschitz_constant is None
    rep = check_lipschitz(field, 1000.0, samples=100_000, box_radius=10.0,
                          rng_seed=8)
    assert not rep.passed
    t, x, y = rep.violating_pair
    assert (x[0] - 1.0) * (y[0] - 1.0) <= 0  # straddles the jump


def test_schmidt_levels():
    field = make_coefficients("schmidt1d")
    x = np.array([[0.5], [1.0], [1.5]])
    sig = field.diffusion(0.0, x)
    np.testing.assert_array_equal(sig[:, 0, 0], [1.0, 2.0, 2.0])
    np.testing.assert_array_equal(field.drift(0.0, x), np.zeros((3, 1)))


def test_catalog_parameter_overrides():
    field = make_coefficients("ou1d", kappa=2.0)
    assert field.lipschitz_constant == 4.0
    with pytest.raises(ValueError, match="unknown parameters"):
        make_coefficients("ou1d", theta=1.0)
    with pytest.raises(ValueError, match="unknown coefficient"):
        make_coefficients("bm3d")


def test_diagnostics_validate_inputs():
    f = make_coefficients("ou1d")
    with pytest.raises(ValueError):
        check_linear_growth(f, -1.0)
    with pytest.raises(ValueError):
        check_lipschitz(f, 1.0, samples=0)
