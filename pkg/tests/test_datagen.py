import math

import numpy as np
import pytest
from scipy.integrate import quad

from heavymean.datagen import (
    GeneratorKind,
    GeneratorSpec,
    InfiniteMomentError,
    generate,
    lomax_from_uniform,
    lomax_moment,
    make_rng,
    moment_v,
    sample_lomax,
    sample_sphere,
)
from heavymean.space import SpaceSpec, row_norms


def lomax_moment_quad(a, p):
    val, err = quad(lambda x: x**p * a * (1 + x) ** (-(a + 1)), 0, np.inf, epsabs=0, epsrel=1e-12, limit=500)
    return val


def test_inverse_cdf_endpoints():
    assert lomax_from_uniform(1.0, 1.75) == 0.0
    assert lomax_from_uniform(2 ** -1.75, 1.75) == pytest.approx(1.0, rel=1e-15)


def test_lomax_mean():
    x = sample_lomax(make_rng(0), 1.75, 10**6)
    assert np.all(x >= 0)
    assert lomax_moment_quad(1.75, 1.0) == pytest.approx(4 / 3, rel=1e-9)
    assert x.mean() == pytest.approx(4 / 3, rel=0.02)


def test_lomax_scalar_and_validation():
    assert isinstance(sample_lomax(make_rng(1), 2.0), float)
    with pytest.raises(ValueError):
        sample_lomax(make_rng(1), 0.0)


def test_sphere():
    U = sample_sphere(make_rng(2), 6, 10**5)
    np.testing.assert_allclose(np.sqrt(np.sum(U * U, axis=1)), 1.0, atol=1e-12)
    se = math.sqrt(1 / 6 / 10**5)
    assert np.all(np.abs(U.mean(axis=0)) < 3 * se)
    sq = U[:, 0] ** 2
    assert abs(sq.mean() - 1 / 6) < 3 * sq.std() / math.sqrt(10**5)
    assert sample_sphere(make_rng(2), 3).shape == (3,)


def test_rng_streams():
    a = make_rng(5, 3).random(4)
    np.testing.assert_array_equal(a, make_rng(5, 3).random(4))
    assert not np.array_equal(a, make_rng(5, 4).random(4))
    assert not np.array_equal(a, make_rng(6, 3).random(4))


def test_generated_mean_near_zero():
    X = generate(GeneratorSpec(a=1.75, dim=10), 10**6, make_rng(0))
    assert np.linalg.norm(X.mean(axis=0)) < 0.05


def test_offset_and_magnitudes():
    spec = GeneratorSpec(a=2.5, dim=3, mean_offset=(1.0, 2.0, 3.0))
    X = generate(spec, 1000, make_rng(3))
    Y = generate(GeneratorSpec(a=2.5, dim=3), 1000, make_rng(3))
    np.testing.assert_allclose(X - spec.mu, Y, atol=1e-12)


def test_constant_scale_martingale_equals_iid():
    mart = GeneratorSpec(GeneratorKind.MARTINGALE_SCALE, a=1.75, dim=4, base=1.0, amp=0.0, lo=1.0, hi=1.0)
    iid = GeneratorSpec(GeneratorKind.LOMAX_SPHERE, a=1.75, dim=4)
    np.testing.assert_array_equal(generate(mart, 500, make_rng(9)), generate(iid, 500, make_rng(9)))


def test_martingale_scale_follows_recursion():
    spec = GeneratorSpec(GeneratorKind.MARTINGALE_SCALE, a=3.0, dim=2, mean_offset=(1.0, 1.0))
    X = generate(spec, 200, make_rng(4))
    rng = make_rng(4)
    Y = sample_lomax(rng, 3.0, 200)
    U = sample_sphere(rng, 2, 200)
    mags = np.linalg.norm(X - spec.mu, axis=1) / Y
    w = np.array(spec.w)
    sig = [0.5]
    for m in range(1, 200):
        sig.append(min(1.5, max(0.5, 0.5 + abs(math.tanh(w @ (X[m - 1] - spec.mu))))))
    np.testing.assert_allclose(mags, sig, rtol=1e-12)
    assert spec.sigma_max == 1.5


def test_empty_and_invalid_generation():
    assert generate(GeneratorSpec(dim=3), 0, make_rng(0)).shape == (0, 3)
    with pytest.raises(ValueError):
        generate(GeneratorSpec(dim=3), -1, make_rng(0))
    with pytest.raises(ValueError):
        GeneratorSpec(a=1.0)
    with pytest.raises(ValueError):
        GeneratorSpec(dim=2, mean_offset=(1.0,))


@pytest.mark.parametrize("a,p", [(1.75, 1.0), (1.75, 1.5), (3.0, 2.0), (2.5, 1.2)])
def test_lomax_moment_against_quadrature(a, p):
    assert lomax_moment(a, p) == pytest.approx(lomax_moment_quad(a, p), rel=1e-6)


def test_moment_examples():
    assert lomax_moment(1.75, 1.0) == pytest.approx(4 / 3, rel=1e-13)
    assert lomax_moment(3.0, 2.0) == pytest.approx(1.0, rel=1e-13)
    with pytest.raises(InfiniteMomentError):
        lomax_moment(1.75, 1.75)


def test_moment_v_kinds():
    assert moment_v(GeneratorSpec(a=1.75), 1.5) == lomax_moment(1.75, 1.5)
    mart = GeneratorSpec(GeneratorKind.MARTINGALE_SCALE, a=3.0)
    assert moment_v(mart, 2.0) == pytest.approx(1.5**2 * lomax_moment(3.0, 2.0))
    g = GeneratorSpec(GeneratorKind.GAUSSIAN_SPHERE, dim=3)
    ref, _ = quad(lambda x: x**1.5 * math.sqrt(2 / math.pi) * math.exp(-x * x / 2), 0, np.inf)
    assert moment_v(g, 1.5) == pytest.approx(ref, rel=1e-9)
    assert moment_v(g, 2.0) == pytest.approx(1.0, rel=1e-13)


def test_norm_of_centred_draw_is_the_magnitude():
    spec = GeneratorSpec(a=2.0, dim=5)
    X = generate(spec, 100, make_rng(8))
    rng = make_rng(8)
    np.testing.assert_allclose(row_norms(X, SpaceSpec.euclidean(5)), sample_lomax(rng, 2.0, 100), rtol=1e-13)


def test_sign_flip_symmetry():
    X = generate(GeneratorSpec(a=2.5, dim=3), 200_000, make_rng(17))
    f = lambda Z: Z[:, 0] ** 3 / (1 + np.sum(Z * Z, axis=1))  # odd, bounded growth
    a, b = f(X), f(-X)
    se = math.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) < 3 * se


@pytest.mark.parametrize("a,p", [(3.0, 1.2), (3.0, 1.0), (2.5, 1.0)])
def test_empirical_moment_within_three_se(a, p):
    from heavymean.experiments import median_of_means
    spec = GeneratorSpec(a=a, dim=4)
    X = generate(spec, 10**6, make_rng(18))
    est, se = median_of_means(np.linalg.norm(X, axis=1) ** p, 16)
    assert abs(est - moment_v(spec, p)) <= 3 * se
