"""Cross-cutting properties: rank equalities, reparameterization invariance,
factorization bounds, and the Jacobian/Fisher/Hessian relationships that hold
for every exponential-family zoo model."""

import math

import numpy as np
import pytest

from identrank import (
    Sampler,
    armitage_doll,
    cond_demo,
    fisher_information,
    fisher_rank,
    linear_gaussian,
    mean_jacobian,
    poisson_glm,
    redundancy_test,
    two_mutation,
)
from identrank import diffkit as ad
from identrank.expfam import normal, poisson
from identrank.identcore import fisher_factor
from identrank.modelzoo import AuxData, MeanModel

GLM_DESIGN = np.loadtxt("specs/data/glm_design_20x3.csv", delimiter=",")


def zoo_with_families():
    return [
        (armitage_doll(4), poisson()),
        (two_mutation(), poisson()),
        (cond_demo(), normal(1.0)),
        (poisson_glm(GLM_DESIGN), poisson()),
        (linear_gaussian(GLM_DESIGN), normal(2.0)),
    ]


@pytest.mark.parametrize("model,fam", zoo_with_families(), ids=lambda v: getattr(v, "name", None) or v.kind.value)
def test_rank_D_equals_rank_I_at_every_sampled_theta(model, fam):
    sampler = Sampler(m=32, seed=101)
    for theta in sampler.draw(model.param_box):
        rd = redundancy_test(model, fam, theta)
        ri = fisher_rank(model, fam, theta)
        assert rd.rank == ri.rank, f"{model.name} at {theta}: rank D {rd.rank} != rank I {ri.rank}"


@pytest.mark.parametrize("model,fam", zoo_with_families(), ids=lambda v: getattr(v, "name", None) or v.kind.value)
def test_fisher_information_is_psd(model, fam):
    sampler = Sampler(m=16, seed=102)
    for theta in sampler.draw(model.param_box):
        I = fisher_information(model, fam, theta)
        assert np.array_equal(I, I.T)
        eig = np.linalg.eigvalsh(I)
        assert eig.min() >= -1e-10 * max(eig.max(), 1e-300)


def reparameterized(model, T):
    """Model in new coordinates omega with theta = T omega."""
    T = np.asarray(T, dtype=float)

    def mean(omega, z, y):
        theta = []
        for i in range(model.p):
            acc = T[i, 0] * omega[0]
            for j in range(1, model.p):
                acc = acc + T[i, j] * omega[j]
            theta.append(acc)
        return model.mean(theta, z, y)

    return MeanModel(
        name=model.name + "_reparam",
        p=model.p,
        param_box=model.param_box,
        mean=mean,
        default_aux=model.default_aux,
    )


@pytest.mark.parametrize("model,fam", zoo_with_families(), ids=lambda v: getattr(v, "name", None) or v.kind.value)
def test_fisher_rank_invariant_under_linear_reparameterization(model, fam):
    rng = np.random.default_rng(103)
    sampler = Sampler(m=4, seed=104)
    thetas = sampler.draw(model.param_box)
    for k in range(20):
        # well-conditioned: orthogonal factors around a mild diagonal
        Q1, _ = np.linalg.qr(rng.normal(size=(model.p, model.p)))
        Q2, _ = np.linalg.qr(rng.normal(size=(model.p, model.p)))
        T = Q1 @ np.diag(rng.uniform(0.5, 2.0, size=model.p)) @ Q2
        wrapped = reparameterized(model, T)
        theta = thetas[k % len(thetas)]
        omega = np.linalg.solve(T, theta)
        r_theta = fisher_rank(model, fam, theta).rank
        r_omega = fisher_rank(wrapped, fam, omega).rank
        assert r_theta == r_omega


def test_fisher_factor_reproduces_information():
    m = two_mutation()
    fam = poisson()
    theta = m.box_center()
    C = fisher_factor(m, fam, theta)
    I = fisher_information(m, fam, theta)
    assert np.max(np.abs(C @ C.T - I)) <= 1e-12 * max(1.0, np.max(np.abs(I)))


def test_factored_models_have_fisher_rank_at_most_N():
    # Eq.-level consequence of factoring the mean through N combinations
    sampler = Sampler(m=32, seed=105)
    for k in (2, 3, 5):
        model = armitage_doll(k)
        fam = poisson()
        N = model.factorization.n_combos
        for theta in sampler.draw(model.param_box):
            assert fisher_rank(model, fam, theta).rank <= N


def test_jacobian_never_depends_on_observations():
    m = two_mutation()
    theta = m.box_center()
    aux = m.default_aux
    D1 = mean_jacobian(m, theta, aux)
    D2 = mean_jacobian(m, theta, AuxData(z=aux.z, y=aux.y))
    assert np.array_equal(D1, D2)


def test_two_mutation_jacobian_rank_three_margins():
    # the redundancy is exact: sigma_4 is at rounding level; sigma_3 stays
    # far above the decision threshold everywhere in the box
    m = two_mutation()
    sampler = Sampler(m=48, seed=106)
    fam = poisson()
    for theta in sampler.draw(m.param_box):
        d = redundancy_test(m, fam, theta)
        s = d.singular_values
        assert d.rank == 3
        assert s[2] / s[0] > 1e-7
        assert s[3] / s[0] < 1e-12
