"""The identifiability engine.

Builds the mean Jacobian, score, observed Hessian and Fisher information for
a mean model embedded in an exponential family, runs the rank tests that
decide redundancy and identifiability, classifies models over sampled
parameter boxes, traces likelihood ridges along redundancy directions, and
provides the IRLS/Newton steps whose breakdown motivates the whole exercise.

Conventions
-----------
* The mean Jacobian D is p x n with D_ij = d mu_j / d theta_i.
* Rank decisions reuse :mod:`identrank.ranklab` defaults unless overridden,
  and every report records tolerances and seed.
* The Fisher information rank is decided on a square-root factor C with
  I = C C^T rather than on I itself: squaring the singular values would
  halve the usable tolerance margin and break the exact rank equality with
  D that the theory guarantees.
* "For every theta" claims are sampled evidence, never proof. Samplers are
  deterministic given their seed; corner points and user-pinned thetas can
  be included because conditional rank drops usually live on measure-zero
  sets that random draws miss.

Everything here is a pure function of (model, family, theta, data); scans
may run concurrently at distinct theta without coordination.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import diffkit as ad
from . import ranklab
from .errors import (
    FullRankModelError,
    InputError,
    InternalConsistencyError,
    SingularityError,
)
from .expfam import ExpFamily
from .modelzoo import AuxData, CustomLikelihoodModel, Dataset, MeanModel

DEFAULT_SEED = 1729
_B1_CHECK_RTOL = 1e-8


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class Sampler:
    """Deterministic parameter-box sampler for "for every theta" scans.

    Draw order is pinned points, then box corners (when enabled), then ``m``
    random points; log-scale coordinates are sampled log-uniformly.  The
    same seed always yields the same draw.
    """

    m: int = 64
    seed: int = DEFAULT_SEED
    include_corners: bool = False
    pinned: tuple = ()

    def __post_init__(self):
        if self.m < 1:
            raise InputError(f"sample count must be >= 1, got {self.m}")

    def draw(self, param_box):
        p = len(param_box)
        thetas = []
        for theta in self.pinned:
            theta = np.asarray(theta, dtype=float)
            if theta.shape != (p,):
                raise InputError(f"pinned theta {theta} has wrong dimension (expected {p})")
            for r, v in zip(param_box, theta):
                if not r.contains(v):
                    raise InputError(f"pinned theta {theta.tolist()} lies outside the parameter box")
            thetas.append(theta)
        if self.include_corners and p <= 12:
            for corner in itertools.product(*((r.lo, r.hi) for r in param_box)):
                thetas.append(np.array(corner, dtype=float))
        rng = np.random.default_rng(self.seed)
        for _ in range(self.m):
            draw = np.empty(p)
            for i, r in enumerate(param_box):
                if r.scale == "log":
                    draw[i] = math.exp(rng.uniform(math.log(r.lo), math.log(r.hi)))
                else:
                    draw[i] = rng.uniform(r.lo, r.hi)
            thetas.append(draw)
        return thetas


# ---------------------------------------------------------------------------
# likelihood plumbing


def _require_mean_model(model, what):
    if not isinstance(model, MeanModel):
        raise InputError(f"{what} requires a mean model, got {type(model).__name__}")


def _aux_of(model, data):
    if data is not None:
        return data
    if model.default_aux is not None:
        return model.default_aux
    raise InputError(f"model {model.name} has no default design; supply data")


def loglik_function(model, fam, data):
    """Total log-likelihood as a function of theta, evaluable on AD numbers."""
    if isinstance(model, CustomLikelihoodModel):
        x = np.asarray(data.x if isinstance(data, Dataset) else data, dtype=float)
        if x.shape != (model.p,):
            raise InputError(f"custom model {model.name} expects x of length {model.p}")

        def f_custom(theta):
            return model.loglik(theta, x)

        return f_custom

    if not isinstance(data, Dataset):
        raise InputError("likelihood evaluation requires a Dataset with observations x")
    data.validate_support(fam)
    a = fam.dispersion()

    def f(theta):
        total = 0.0
        for l in range(data.n):
            m_l = data.trials_at(l)
            mu = model.mean(theta, float(data.z[l]), data.y[l])
            zeta = fam.natural_from_mean(mu, m_l)
            total = total + (
                (float(data.x[l]) * zeta - fam.cumulant(zeta, m_l)) / a
                + fam.log_base_measure(float(data.x[l]), m_l)
            )
        return total

    return f


def total_log_likelihood(model, fam, theta, data):
    """Plain value of the total log-likelihood at theta."""
    return ad.value_of(loglik_function(model, fam, data)(list(np.asarray(theta, dtype=float))))


def mean_vector(model, theta, data=None):
    """Model means mu_l(theta) over the auxiliary design; shape (n,)."""
    _require_mean_model(model, "mean_vector")
    aux = _aux_of(model, data)
    theta = [float(t) for t in theta]
    return np.array(
        [ad.value_of(model.mean(theta, float(aux.z[l]), aux.y[l])) for l in range(aux.n)]
    )


def mean_jacobian(model, theta, data=None):
    """Exact Jacobian of the mean map, D_ij = d mu_j / d theta_i, shape (p, n).

    Forward-mode AD through the mean function; no link or design structure
    is assumed.  Observations x never enter.
    """
    _require_mean_model(model, "mean_jacobian")
    aux = _aux_of(model, data)
    theta = np.asarray(theta, dtype=float)
    D = np.zeros((model.p, aux.n))
    for l in range(aux.n):
        _, g, _ = ad.value_gradient_hessian(
            lambda th, row=aux.y[l], z=float(aux.z[l]): model.mean(th, z, row), theta
        )
        D[:, l] = g
    return D


def _natural_stats(model, fam, theta, aux):
    """Per-observation (mu, zeta, b'', trials) at theta; floats only."""
    mu = mean_vector(model, theta, aux)
    zeta = np.empty(aux.n)
    b2 = np.empty(aux.n)
    trials = np.array([aux.trials_at(l) for l in range(aux.n)])
    for l in range(aux.n):
        zeta[l] = ad.value_of(fam.natural_from_mean(mu[l], trials[l]))
        b2[l] = ad.value_of(fam.cumulant_d2(zeta[l], trials[l]))
        if b2[l] <= 0.0 or not math.isfinite(b2[l]):
            raise SingularityError(f"b'' vanished or overflowed at observation {l} (zeta={zeta[l]})")
    return mu, zeta, b2, trials


def score(model, fam, theta, data):
    """Score vector U = (1/a) D diag(1/b'') (x - mu), shape (p,).

    This is the exact gradient of the total log-likelihood for any mean
    parameterization, and reduces to the familiar design-matrix formula for
    GLMs.  For custom-likelihood models the AD gradient is returned.
    """
    if isinstance(model, CustomLikelihoodModel):
        _, g, _ = ad.value_gradient_hessian(loglik_function(model, fam, data), np.asarray(theta, float))
        return g
    if not isinstance(data, Dataset):
        raise InputError("score requires observations x")
    mu, _, b2, _ = _natural_stats(model, fam, theta, data)
    D = mean_jacobian(model, theta, data)
    return D @ ((data.x - mu) / b2) / fam.dispersion()


def observed_hessian(model, fam, theta, data, check=True):
    """Observed Hessian of the total log-likelihood at theta (exact, symmetric).

    Computed by forward-mode AD of the likelihood.  For hazard-embedded
    models the result is cross-checked against the assembled two-term
    embedding formula (residual-weighted hazard curvature minus the
    b''-weighted gradient outer products with the b''' correction); a
    disagreement beyond 1e-8 relative raises InternalConsistencyError.
    """
    theta = np.asarray(theta, dtype=float)
    _, _, H = ad.value_gradient_hessian(loglik_function(model, fam, data), theta)
    if (
        check
        and isinstance(model, MeanModel)
        and model.hazard is not None
        and isinstance(data, Dataset)
    ):
        H_formula = hazard_embedding_hessian(model, fam, theta, data)
        scale = 1.0 + float(np.max(np.abs(H)))
        if float(np.max(np.abs(H - H_formula))) > _B1_CHECK_RTOL * scale:
            raise InternalConsistencyError(
                f"AD Hessian and embedding formula disagree for {model.name} "
                f"(max diff {float(np.max(np.abs(H - H_formula))):.3e}, scale {scale:.3e})"
            )
    return H


def hazard_embedding_hessian(model, fam, theta, data):
    """Two-term Hessian of a hazard-embedded likelihood, assembled explicitly.

    For mu_l = z_l h(theta, y_l):

        H = sum_l [ (x_l - b') z_l / (a b'') * d2h
                    - z_l^2 / a * dh dh^T * (b''^2 + b'''(x_l - b')) / b''^3 ]

    Independent of the AD-of-likelihood route at the composition level, so
    it serves as the internal cross-check for hazard models.  The second
    term is the rank-one piece per observation; at fitted data (x = mu) the
    first term vanishes.
    """
    _require_mean_model(model, "hazard_embedding_hessian")
    if model.hazard is None:
        raise InputError(f"model {model.name} has no hazard form")
    theta = np.asarray(theta, dtype=float)
    a = fam.dispersion()
    p = model.p
    H = np.zeros((p, p))
    for l in range(data.n):
        m_l = data.trials_at(l)
        z = float(data.z[l])
        t_l = float(data.y[l][0])
        h, gh, Hh = ad.value_gradient_hessian(
            lambda th, t=t_l: model.hazard(th, t), theta
        )
        zeta = ad.value_of(fam.natural_from_mean(z * h, m_l))
        b1 = ad.value_of(fam.cumulant_d1(zeta, m_l))
        b2 = ad.value_of(fam.cumulant_d2(zeta, m_l))
        b3 = ad.value_of(fam.cumulant_d3(zeta, m_l))
        resid = float(data.x[l]) - b1
        outer = gh[:, None] * gh[None, :]
        H += (resid * z / (a * b2)) * Hh
        H -= (z * z / a) * outer * ((b2 * b2 + b3 * resid) / b2**3)
    return H


def fisher_factor(model, fam, theta, data=None):
    """Square-root factor C (p x n) of the Fisher information: I = C C^T.

    Columns are d mu_l / d theta scaled by 1/sqrt(a b''(zeta_l)); for hazard
    embeddings this is the z_l^2 / b'' weighting of the gradient outer
    products, and for GLMs it reproduces D Delta V Delta D^T / a^2.
    Observations x are never needed.
    """
    _require_mean_model(model, "fisher_factor")
    aux = _aux_of(model, data)
    _, _, b2, _ = _natural_stats(model, fam, theta, aux)
    D = mean_jacobian(model, theta, aux)
    return D / np.sqrt(fam.dispersion() * b2)[None, :]


def fisher_information(model, fam, theta, data=None):
    """Fisher information matrix I(theta), symmetric positive semidefinite."""
    C = fisher_factor(model, fam, theta, data)
    I = C @ C.T
    return 0.5 * (I + I.T)


def fisher_rank(model, fam, theta, data=None, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS):
    """Rank decision for the Fisher information, taken on its factor.

    rank(C C^T) = rank(C) exactly; deciding on C keeps the tolerance on the
    same scale as the mean Jacobian instead of its square.
    """
    return ranklab.numerical_rank(fisher_factor(model, fam, theta, data), tol_rel, tol_abs)


# ---------------------------------------------------------------------------
# GLM closed forms (cross-check targets for the AD routes)


def _glm_required(model):
    _require_mean_model(model, "GLM formula")
    if model.design is None or model.link not in ("log", "identity"):
        raise InputError(f"model {model.name} does not carry a GLM design")


def glm_jacobian_formula(model, theta):
    """D = A^T G^{-1} with G = diag(g'(mu_l)) for the model's link."""
    _glm_required(model)
    A = model.design
    eta = A @ np.asarray(theta, dtype=float)
    mu = np.exp(eta) if model.link == "log" else eta
    gprime = (1.0 / mu) if model.link == "log" else np.ones_like(mu)
    return A.T / gprime[None, :]


def glm_score_formula(model, fam, theta, data):
    """U = (1/a) D Delta (x - mu), Delta = diag(1/b'')."""
    _glm_required(model)
    mu, _, b2, _ = _natural_stats(model, fam, theta, data)
    D = glm_jacobian_formula(model, theta)
    return D @ ((data.x - mu) / b2) / fam.dispersion()


def glm_fisher_formula(model, fam, theta, data=None):
    """I = (1/a^2) D Delta V Delta D^T with V = diag(Var x_l) = diag(a b'')."""
    _glm_required(model)
    aux = _aux_of(model, data)
    _, _, b2, _ = _natural_stats(model, fam, theta, aux)
    D = glm_jacobian_formula(model, theta)
    a = fam.dispersion()
    delta_v_delta = (1.0 / b2) * (a * b2) * (1.0 / b2)
    return (D * delta_v_delta[None, :]) @ D.T / (a * a)


# ---------------------------------------------------------------------------
# rank tests and classification


def redundancy_test(model, fam, theta, data=None, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS):
    """Rank decision on the mean Jacobian D; rank < p is local redundancy evidence."""
    D = mean_jacobian(model, theta, data)
    return ranklab.numerical_rank(D, tol_rel, tol_abs)


def redundancy_directions(model, fam, theta, data=None, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS):
    """Orthonormal parameter-space directions alpha with alpha^T D = 0.

    Along these directions every mean is locally invariant to first order.
    A full-rank model yields an empty basis (shape (p, 0)), not an error.
    """
    D = mean_jacobian(model, theta, data)
    return ranklab.left_null_space(D, tol_rel, tol_abs)


REDUNDANT = "Redundant"
CONDITIONAL = "ConditionallyFullRankEvidence"
ESSENTIAL = "EssentiallyFullRankEvidence"


@dataclass(frozen=True)
class SampleRecord:
    theta: tuple
    rank_D: ranklab.RankDecision
    rank_I: ranklab.RankDecision
    rank_H: Optional[ranklab.RankDecision] = None


@dataclass(frozen=True)
class Classification:
    label: str
    full_count: int
    deficient_count: int
    records: tuple


def classify(model, fam, data=None, sampler=None, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS):
    """Scan the parameter box and classify the rank profile of the model.

    Redundant when every sampled rank(D) < p; essentially-full-rank evidence
    when every sampled rank(D) = p; conditionally-full-rank evidence with
    the split recorded otherwise.  Deterministic given the sampler seed.
    Sampling is evidence, not proof: the underlying definitions quantify
    over the whole parameter space.
    """
    _require_mean_model(model, "classify")
    sampler = sampler or Sampler()
    aux = _aux_of(model, data)
    has_x = isinstance(data, Dataset)
    records = []
    for theta in sampler.draw(model.param_box):
        rd = redundancy_test(model, fam, theta, aux, tol_rel, tol_abs)
        ri = fisher_rank(model, fam, theta, aux, tol_rel, tol_abs)
        rh = None
        if has_x:
            H = observed_hessian(model, fam, theta, data)
            rh = ranklab.numerical_rank(H, tol_rel, tol_abs)
        records.append(SampleRecord(tuple(float(v) for v in theta), rd, ri, rh))
    full = sum(1 for r in records if r.rank_D.rank == model.p)
    deficient = len(records) - full
    if full == 0:
        label = REDUNDANT
    elif deficient == 0:
        label = ESSENTIAL
    else:
        label = CONDITIONAL
    return Classification(label, full, deficient, tuple(records))


def subset_identifiability(model, fam, theta, data, subset, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS):
    """Whether the principal submatrix of the observed Hessian on ``subset`` is full rank."""
    H = observed_hessian(model, fam, theta, data)
    decision = ranklab.principal_submatrix_rank(H, subset, tol_rel, tol_abs)
    return decision.rank == len(tuple(subset)), decision


def hazard_hessian_rank(model, theta, y, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS):
    """Rank decision for the hazard Hessian d2 h / d theta^2 at one covariate point."""
    _require_mean_model(model, "hazard_hessian_rank")
    if model.hazard is None:
        raise InputError(f"model {model.name} has no hazard form")
    theta = np.asarray(theta, dtype=float)
    _, _, Hh = ad.value_gradient_hessian(lambda th: model.hazard(th, float(y)), theta)
    return ranklab.numerical_rank(Hh, tol_rel, tol_abs)


@dataclass(frozen=True)
class BoundReport:
    """Hessian/Fisher rank bounds on the irredundant parameter count.

    ``fisher_upper`` is the max sampled Fisher rank.  For hazard models the
    Hessian route probes the hazard Hessian over the design's covariate
    points; its raw maximum can exceed the Fisher rank at special points
    (the realizable likelihood-Hessian rank and the hazard-Hessian rank do
    not bound each other), so the pair is reported capped, with the raw
    number and a flag preserved for interpretation.
    """

    hessian_lower: int
    fisher_upper: int
    hazard_hessian_max_rank: Optional[int]
    observed_hessian_max_rank: Optional[int]
    capped: bool


def bound_report(model, fam, data=None, sampler=None, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS, n_sim=3):
    """Estimate (hessian_lower, fisher_upper) over a parameter-box scan.

    Hazard-form models take the Hessian route through the hazard Hessian;
    other mean models take the max observed-Hessian rank over ``n_sim``
    simulated datasets per sampled theta.
    """
    _require_mean_model(model, "bound_report")
    sampler = sampler or Sampler()
    aux = _aux_of(model, data)
    thetas = sampler.draw(model.param_box)
    fisher_upper = 0
    for theta in thetas:
        fisher_upper = max(fisher_upper, fisher_rank(model, fam, theta, aux, tol_rel, tol_abs).rank)

    hazard_max = None
    observed_max = None
    if model.hazard is not None:
        hazard_max = 0
        probe_ts = sorted(set(float(v) for v in aux.y[:, 0]))
        for theta in thetas:
            for t in probe_ts:
                hazard_max = max(
                    hazard_max, hazard_hessian_rank(model, theta, t, tol_rel, tol_abs).rank
                )
                if hazard_max >= model.p:
                    break
        raw = hazard_max
    else:
        observed_max = 0
        rng = np.random.default_rng(sampler.seed + 1)
        for theta in thetas:
            mu = mean_vector(model, theta, aux)
            for _ in range(n_sim):
                x = fam.simulate(rng, mu, aux.trials)
                data_sim = Dataset(z=aux.z, y=aux.y, trials=aux.trials, x=x)
                H = observed_hessian(model, fam, theta, data_sim)
                observed_max = max(observed_max, ranklab.numerical_rank(H, tol_rel, tol_abs).rank)
            if observed_max >= model.p:
                break
        raw = observed_max

    capped = raw > fisher_upper
    return BoundReport(
        hessian_lower=min(raw, fisher_upper),
        fisher_upper=fisher_upper,
        hazard_hessian_max_rank=hazard_max,
        observed_hessian_max_rank=observed_max,
        capped=capped,
    )


@dataclass(frozen=True)
class FactorizationCheck:
    ok: bool
    n_combos: int
    witness_theta: Optional[tuple]
    witness_rank: Optional[int]


def factorization_bound_check(model, fam, data=None, sampler=None, n_combos=None, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS):
    """Check rank(I) <= N at every sampled theta for a declared N-combination factorization.

    A mean structure that factors through N parameter combinations forces
    the Fisher information rank to at most N everywhere; a sampled theta
    violating the bound is returned as a witness against the declaration.
    """
    _require_mean_model(model, "factorization_bound_check")
    if n_combos is None:
        if model.factorization is None:
            raise InputError(f"model {model.name} declares no factorization")
        n_combos = model.factorization.n_combos
    n_combos = int(n_combos)
    sampler = sampler or Sampler()
    aux = _aux_of(model, data)
    for theta in sampler.draw(model.param_box):
        r = fisher_rank(model, fam, theta, aux, tol_rel, tol_abs).rank
        if r > n_combos:
            return FactorizationCheck(False, n_combos, tuple(float(v) for v in theta), r)
    return FactorizationCheck(True, n_combos, None, None)


# ---------------------------------------------------------------------------
# ridge tracing


def _to_scaled(theta, box):
    return np.array(
        [math.log(t) if r.scale == "log" else t for t, r in zip(theta, box)]
    )


def _from_scaled(phi, box):
    return np.array(
        [math.exp(v) if r.scale == "log" else v for v, r in zip(phi, box)]
    )


def _scaled_jacobian(model, theta, aux):
    """Mean Jacobian in box-scaled coordinates: row i of D times dtheta_i/dphi_i."""
    D = mean_jacobian(model, theta, aux)
    factors = np.array(
        [t if r.scale == "log" else 1.0 for t, r in zip(theta, model.param_box)]
    )
    return factors[:, None] * D


@dataclass(frozen=True)
class RidgePoint:
    t: float
    drift: float
    direction: tuple


@dataclass(frozen=True)
class RidgeTrace:
    loglik0: float
    points: tuple
    max_drift: float
    truncated: bool


def ridge_trace(model, fam, theta0, data, t_max=0.2, steps=100, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS):
    """Trace the likelihood along the redundancy null direction from theta0.

    Steps of length t_max/steps are taken in box-scaled coordinates along
    the current unit left-null direction of the scaled mean Jacobian,
    recomputed at every step (first-order continuation, not exact
    integration of the null distribution), in both the + and - senses.
    Reports |L(theta(t)) - L(theta0)| at every visited point.  A trace that
    exits the parameter box is truncated and flagged.  Raises
    FullRankModelError when theta0 admits no redundancy direction.
    """
    _require_mean_model(model, "ridge_trace")
    if steps < 1 or t_max <= 0.0:
        raise InputError("ridge_trace requires steps >= 1 and t_max > 0")
    if not isinstance(data, Dataset):
        raise InputError("ridge_trace requires observations x to report likelihood drift")
    theta0 = np.asarray(theta0, dtype=float)
    aux = data.aux
    basis0 = ranklab.left_null_space(_scaled_jacobian(model, theta0, aux), tol_rel, tol_abs)
    if basis0.shape[1] == 0:
        raise FullRankModelError(
            f"model {model.name} is full rank at theta0; no redundancy direction to trace"
        )
    L0 = total_log_likelihood(model, fam, theta0, data)
    step = t_max / steps
    points = []
    truncated = False
    for sign in (1.0, -1.0):
        phi = _to_scaled(theta0, model.param_box)
        theta = theta0.copy()
        for k in range(1, steps + 1):
            basis = ranklab.left_null_space(_scaled_jacobian(model, theta, aux), tol_rel, tol_abs)
            if basis.shape[1] == 0:
                truncated = True
                break
            alpha = basis[:, 0]
            phi = phi + sign * step * alpha
            theta = _from_scaled(phi, model.param_box)
            if not model.box_contains(theta):
                truncated = True
                break
            drift = abs(total_log_likelihood(model, fam, theta, data) - L0)
            points.append(RidgePoint(sign * k * step, drift, tuple(float(v) for v in alpha)))
    max_drift = max((pt.drift for pt in points), default=0.0)
    return RidgeTrace(L0, tuple(points), max_drift, truncated)


# ---------------------------------------------------------------------------
# fitting steps


def irls_step(model, fam, theta, data, weights=None):
    """One iteratively-reweighted least-squares step Delta theta.

    Solves H^T W H Delta = H^T W (x - mu) with H_lj = d mu_l / d theta_j and
    W = diag(1/v_l); the default v_l is the family variance a(phi) b''(zeta_l)
    at the current theta.  Raises SingularityError naming the deficiency when
    the normal matrix is rank deficient, which is exactly the breakdown a
    redundant parameterization produces.
    """
    _require_mean_model(model, "irls_step")
    if not isinstance(data, Dataset):
        raise InputError("irls_step requires observations x")
    theta = np.asarray(theta, dtype=float)
    mu, _, b2, _ = _natural_stats(model, fam, theta, data)
    if weights is None:
        v = fam.dispersion() * b2
    else:
        v = np.asarray(weights, dtype=float)
        if v.shape != mu.shape or np.any(v <= 0.0):
            raise InputError("weights must be positive, one per observation")
    D = mean_jacobian(model, theta, data)  # H = D.T
    N = (D / v[None, :]) @ D.T
    N = 0.5 * (N + N.T)
    rhs = D @ ((data.x - mu) / v)
    decision = ranklab.numerical_rank(N)
    if decision.rank < model.p:
        raise SingularityError(
            f"IRLS normal matrix is rank deficient for {model.name}: "
            f"rank {decision.rank} < p = {model.p}; the parameterization is "
            f"redundant at this theta",
            rank=decision.rank,
            required=model.p,
        )
    delta = np.linalg.solve(N, rhs)
    resid = float(np.linalg.norm(N @ delta - rhs))
    scale = float(np.linalg.norm(N) * np.linalg.norm(delta) + np.linalg.norm(rhs))
    if resid > 1e-10 * max(scale, 1e-300):
        raise SingularityError(
            f"IRLS solve residual {resid:.3e} exceeds 1e-10 relative; matrix too ill-conditioned"
        )
    return delta


def newton_step(model, fam, theta, data):
    """One Newton step: solve H Delta = -grad with the observed Hessian.

    Requires a full-rank Hessian; a rank-deficient one raises
    SingularityError (the quartic counterexample at theta = x is the
    canonical trigger).
    """
    theta = np.asarray(theta, dtype=float)
    H = observed_hessian(model, fam, theta, data)
    decision = ranklab.numerical_rank(H)
    p = H.shape[0]
    if decision.rank < p:
        raise SingularityError(
            f"observed Hessian is rank deficient: rank {decision.rank} < p = {p}",
            rank=decision.rank,
            required=p,
        )
    g = score(model, fam, theta, data)
    return np.linalg.solve(H, -g)


# ---------------------------------------------------------------------------
# custom-model diagnostics


def grid_unique_max(model, fam, theta0, data, radius=0.5, points_per_dim=21):
    """Verify on a grid that theta0 is the unique maximizer within ``radius``.

    Walks the full tensor grid (points_per_dim per coordinate, center
    excluded) and checks L(theta) < L(theta0) strictly everywhere.  Only
    sensible at small p; the cost is points_per_dim**p evaluations.
    """
    theta0 = np.asarray(theta0, dtype=float)
    f = loglik_function(model, fam, data)
    L0 = ad.value_of(f(list(theta0)))
    offsets = np.linspace(-radius, radius, points_per_dim)
    center = (points_per_dim - 1) // 2
    for idx in itertools.product(range(points_per_dim), repeat=theta0.shape[0]):
        if all(i == center for i in idx):
            continue
        theta = theta0 + np.array([offsets[i] for i in idx])
        if ad.value_of(f(list(theta))) >= L0:
            return False
    return True


# ---------------------------------------------------------------------------
# report assembly


@dataclass(frozen=True)
class IdentReport:
    """Everything the analysis produced, ready for serialization."""

    model_name: str
    family: Optional[dict]
    n: Optional[int]
    p: int
    seed: int
    tol_rel: float
    tol_abs: float
    classification: Optional[str]
    full_count: int
    deficient_count: int
    samples: tuple
    representative_theta: tuple
    redundancy_directions: tuple
    max_subset: Optional[dict]
    bounds: Optional[dict]
    factorization: Optional[dict]
    notes: tuple

    def to_dict(self):
        def rank_dict(d):
            return None if d is None else d.to_dict()

        return {
            "model": self.model_name,
            "family": self.family,
            "n": self.n,
            "p": self.p,
            "seed": self.seed,
            "tolerances": {"tol_rel": self.tol_rel, "tol_abs": self.tol_abs},
            "classification": self.classification,
            "rank_split": {
                "full_rank": self.full_count,
                "rank_deficient": self.deficient_count,
            },
            "samples": [
                {
                    "theta": list(s.theta),
                    "rank_D": rank_dict(s.rank_D),
                    "rank_I": rank_dict(s.rank_I),
                    "rank_H": rank_dict(s.rank_H),
                }
                for s in self.samples
            ],
            "representative_theta": list(self.representative_theta),
            "redundancy_directions": [list(d) for d in self.redundancy_directions],
            "max_subset": self.max_subset,
            "bounds": self.bounds,
            "factorization": self.factorization,
            "notes": list(self.notes),
        }


def _representative_theta(model, sampler):
    if sampler.pinned:
        return np.asarray(sampler.pinned[0], dtype=float)
    return model.box_center()


def analyze(model, fam, data=None, sampler=None, tol_rel=ranklab.DEFAULT_TOL_REL, tol_abs=ranklab.DEFAULT_TOL_ABS, declared_combos=None):
    """Run the full identifiability analysis and assemble an IdentReport.

    For mean models: classification scan, bounds, redundancy directions and
    the maximal full-rank subset at a representative theta, plus the
    factorization bound check when a factorization is declared.  For custom
    likelihood models: observed-Hessian ranks at the pinned thetas and a
    grid uniqueness check at small dimension.
    """
    sampler = sampler or Sampler()
    notes = []

    if isinstance(model, CustomLikelihoodModel):
        if data is None:
            raise InputError(f"custom model {model.name} requires data (the observation vector x)")
        rep = _representative_theta(model, sampler)
        records = []
        thetas = [np.asarray(t, dtype=float) for t in sampler.pinned] or [rep]
        rank_h_rep = None
        for theta in thetas:
            H = observed_hessian(model, fam, theta, data)
            rh = ranklab.numerical_rank(H, tol_rel, tol_abs)
            records.append(SampleRecord(tuple(float(v) for v in theta), None, None, rh))
            if rank_h_rep is None:
                rank_h_rep = rh
        subset = ranklab.max_rank_subset(
            observed_hessian(model, fam, rep, data), tol_rel, tol_abs
        )
        if model.p <= 3:
            if grid_unique_max(model, fam, rep, data):
                notes.append("unique maximum verified on grid")
            else:
                notes.append("grid check found a competing point with L >= L(theta0)")
        return IdentReport(
            model_name=model.name,
            family=None,
            n=model.p,
            p=model.p,
            seed=sampler.seed,
            tol_rel=tol_rel,
            tol_abs=tol_abs,
            classification=None,
            full_count=0,
            deficient_count=0,
            samples=tuple(records),
            representative_theta=tuple(float(v) for v in rep),
            redundancy_directions=(),
            max_subset={
                "k": subset.k,
                "indices": list(subset.subset),
                "method": subset.method,
                "source": "observed_hessian",
            },
            bounds=None,
            factorization=None,
            notes=tuple(notes),
        )

    aux = _aux_of(model, data)
    has_x = isinstance(data, Dataset)
    classification = classify(model, fam, data if has_x else aux, sampler, tol_rel, tol_abs)
    bounds = bound_report(model, fam, aux, sampler, tol_rel, tol_abs)
    rep = _representative_theta(model, sampler)
    directions = redundancy_directions(model, fam, rep, aux, tol_rel, tol_abs)

    if has_x:
        subset_source = "observed_hessian"
        M = observed_hessian(model, fam, rep, data)
    elif model.hazard is not None:
        subset_source = "hazard_hessian"
        t_probe = float(np.median(aux.y[:, 0]))
        _, _, M = ad.value_gradient_hessian(lambda th: model.hazard(th, t_probe), rep)
    else:
        subset_source = "fisher_information"
        M = fisher_information(model, fam, rep, aux)
    subset = ranklab.max_rank_subset(M, tol_rel, tol_abs)

    fact = None
    n_combos = declared_combos
    if n_combos is None and model.factorization is not None:
        n_combos = model.factorization.n_combos
    if n_combos is not None:
        check = factorization_bound_check(model, fam, aux, sampler, n_combos, tol_rel, tol_abs)
        fact = {
            "n_combos": check.n_combos,
            "rank_bound_holds": check.ok,
            "witness_theta": None if check.witness_theta is None else list(check.witness_theta),
            "witness_rank": check.witness_rank,
        }
    if bounds.capped:
        notes.append(
            "hazard-Hessian max rank exceeds the Fisher upper bound; the pair is "
            "reported capped and both numbers are preserved for interpretation"
        )

    return IdentReport(
        model_name=model.name,
        family={"kind": fam.kind.value, "phi": fam.phi},
        n=aux.n,
        p=model.p,
        seed=sampler.seed,
        tol_rel=tol_rel,
        tol_abs=tol_abs,
        classification=classification.label,
        full_count=classification.full_count,
        deficient_count=classification.deficient_count,
        samples=classification.records,
        representative_theta=tuple(float(v) for v in rep),
        redundancy_directions=tuple(tuple(float(v) for v in directions[:, j]) for j in range(directions.shape[1])),
        max_subset={
            "k": subset.k,
            "indices": list(subset.subset),
            "method": subset.method,
            "source": subset_source,
        },
        bounds={
            "hessian_lower": bounds.hessian_lower,
            "fisher_upper": bounds.fisher_upper,
            "hazard_hessian_max_rank": bounds.hazard_hessian_max_rank,
            "observed_hessian_max_rank": bounds.observed_hessian_max_rank,
            "capped": bounds.capped,
        },
        factorization=fact,
        notes=tuple(notes),
    )
