"""Family kernels against direct probability-mass/density oracles and finite differences."""

import math

import numpy as np
import pytest
from scipy import stats

from identrank import binomial, log_likelihood, normal, poisson
from identrank import diffkit as ad
from identrank.errors import DomainError, InputError

FAMILIES = [poisson(), binomial(), normal(2.0)]


def test_poisson_loglik_zero_at_unit_mean():
    # zeta = 0 -> mu = 1; ln P(X=0 | mu=1) = -1
    assert log_likelihood(poisson(), [0.0], [0.0]) == pytest.approx(-1.0, abs=1e-15)


def test_normal_loglik_standard_at_zero():
    assert log_likelihood(normal(1.0), [0.0], [0.0]) == pytest.approx(
        -0.5 * math.log(2.0 * math.pi), abs=1e-15
    )


def test_poisson_loglik_matches_pmf_oracle():
    # oracle: direct pmf evaluation, independent of the cumulant-form code
    fam = poisson()
    zeta = np.log([2.0, 3.0])
    x = np.array([2.0, 3.0])
    expected = stats.poisson.logpmf(2, 2.0) + stats.poisson.logpmf(3, 3.0)
    assert log_likelihood(fam, zeta, x) == pytest.approx(expected, rel=1e-12)


def test_poisson_loglik_matches_pmf_on_small_integer_grid():
    fam = poisson()
    rng = np.random.default_rng(11)
    for _ in range(25):
        mu = rng.uniform(0.2, 8.0, size=4)
        x = rng.poisson(mu).astype(float)
        got = log_likelihood(fam, np.log(mu), x)
        want = float(np.sum(stats.poisson.logpmf(x.astype(int), mu)))
        assert got == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_binomial_loglik_matches_pmf_oracle():
    fam = binomial()
    m = np.array([10.0, 7.0])
    pvals = np.array([0.3, 0.6])
    zeta = np.log(pvals / (1 - pvals))
    x = np.array([4.0, 5.0])
    want = float(np.sum(stats.binom.logpmf(x.astype(int), m.astype(int), pvals)))
    assert log_likelihood(fam, zeta, x, trials=m) == pytest.approx(want, rel=1e-12)


def test_normal_loglik_matches_density_oracle():
    phi = 2.5
    fam = normal(phi)
    mu = np.array([0.3, -1.2, 4.0])
    x = np.array([0.1, -1.0, 5.5])
    want = float(np.sum(stats.norm.logpdf(x, mu, math.sqrt(phi))))
    assert log_likelihood(fam, mu, x) == pytest.approx(want, rel=1e-12)


def test_mean_from_natural_trivial_values():
    assert poisson().mean_from_natural(0.0) == pytest.approx(1.0)
    assert normal(1.0).mean_from_natural(3.5) == 3.5
    assert binomial().mean_from_natural(0.0, trials=10.0) == pytest.approx(5.0)


def test_natural_from_mean_trivial_values():
    assert poisson().natural_from_mean(1.0) == pytest.approx(0.0, abs=1e-15)
    assert normal(1.0).natural_from_mean(-2.0) == -2.0
    assert binomial().natural_from_mean(5.0, trials=10.0) == pytest.approx(0.0, abs=1e-15)


def test_variance_trivial_values():
    assert poisson().variance(0.0) == pytest.approx(1.0)
    assert normal(2.0).variance(123.0) == pytest.approx(2.0)
    assert binomial().variance(0.0, trials=10.0) == pytest.approx(2.5)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.kind.value)
def test_cumulant_derivatives_match_central_differences(fam):
    rng = np.random.default_rng(5)
    h = 1e-3
    for _ in range(100):
        z = rng.uniform(-3.0, 3.0)
        m = float(rng.integers(1, 20))
        b = lambda t: ad.value_of(fam.cumulant(t, m))
        fd1 = (b(z + h) - b(z - h)) / (2 * h)
        fd2 = (b(z + h) - 2 * b(z) + b(z - h)) / (h * h)
        fd3 = (b(z + 2 * h) - 2 * b(z + h) + 2 * b(z - h) - b(z - 2 * h)) / (2 * h**3)
        scale = max(1.0, abs(b(z)))
        assert abs(ad.value_of(fam.cumulant_d1(z, m)) - fd1) <= 1e-6 * max(scale, abs(fd1))
        assert abs(ad.value_of(fam.cumulant_d2(z, m)) - fd2) <= 1e-6 * max(scale, abs(fd2))
        assert abs(ad.value_of(fam.cumulant_d3(z, m)) - fd3) <= 1e-6 * max(scale, abs(fd3))


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.kind.value)
def test_mean_natural_roundtrip(fam):
    rng = np.random.default_rng(17)
    for _ in range(100):
        z = rng.uniform(-4.0, 4.0)
        m = float(rng.integers(1, 30))
        mu = ad.value_of(fam.mean_from_natural(z, m))
        back = ad.value_of(fam.natural_from_mean(mu, m))
        assert abs(ad.value_of(fam.mean_from_natural(back, m)) - mu) <= 1e-10 * max(abs(mu), 1e-12)
        assert back == pytest.approx(z, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.kind.value)
def test_variance_positive_everywhere(fam):
    rng = np.random.default_rng(23)
    for _ in range(100):
        z = rng.uniform(-6.0, 6.0)
        assert ad.value_of(fam.variance(z, 12.0)) > 0.0


def test_support_violation_reports_index():
    with pytest.raises(InputError, match="index 1"):
        log_likelihood(poisson(), [0.0, 0.0], [1.0, -2.0])


def test_mean_boundary_raises():
    with pytest.raises(DomainError):
        poisson().natural_from_mean(0.0)
    with pytest.raises(DomainError):
        binomial().natural_from_mean(10.0, trials=10.0)


def test_dispersion_rules():
    assert poisson().dispersion() == 1.0
    assert normal(3.0).dispersion() == 3.0
    with pytest.raises(InputError):
        normal(-1.0)
    with pytest.raises(InputError):
        poisson().__class__(poisson().kind, 2.0)  # non-unit phi rejected off-normal


def test_cumulant_is_ad_generic():
    # the same kernel code must run on seeded numbers (used by the engine)
    fam = binomial()
    v, g, H = ad.value_gradient_hessian(lambda th: fam.cumulant(th[0], 10.0), [0.3])
    b = lambda t: ad.value_of(fam.cumulant(t, 10.0))
    h = 1e-5
    assert g[0] == pytest.approx((b(0.3 + h) - b(0.3 - h)) / (2 * h), rel=1e-8)
    assert H[0, 0] == pytest.approx((b(0.3 + h) - 2 * b(0.3) + b(0.3 - h)) / h**2, rel=1e-5)
