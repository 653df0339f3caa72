"""Reference mean models covering every rank regime the engine must handle.

Shipped models:

* ``poisson_glm`` / ``linear_gaussian`` -- design-matrix models, full rank
  when the design has full column rank, constructible with duplicated
  columns for redundancy demonstrations.
* ``armitage_doll`` -- multistage incidence hazard, globally redundant: the
  hazard depends on the parameters only through their product, so the mean
  Jacobian has rank 1 everywhere.
* ``two_mutation`` -- constant-parameter clonal-expansion hazard, four
  parameters of which exactly three combinations are estimable.
* ``cond_demo`` -- minimal model whose mean Jacobian drops rank exactly on
  the theta_1 = 0 hyperplane (conditionally full rank).
* ``quartic_counterexample`` -- custom likelihood with a rank-0 Hessian at
  its unique maximizer; not an exponential-family embedding.

Mean and hazard callables are written against :mod:`identrank.diffkit`
primitives, so they evaluate on plain floats and on seeded AD numbers alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import diffkit as ad
from .errors import InputError, InternalConsistencyError
from .expfam import ExpFamily, FamilyKind


@dataclass(frozen=True)
class ParamRange:
    """Closed parameter interval with its sampling scale."""

    lo: float
    hi: float
    scale: str = "linear"  # "linear" | "log"

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
            raise InputError(f"bad parameter range ({self.lo}, {self.hi})")
        if self.scale not in ("linear", "log"):
            raise InputError(f"scale must be 'linear' or 'log', got {self.scale!r}")
        if self.scale == "log" and self.lo <= 0.0:
            raise InputError("log-scale ranges require a positive lower bound")

    def contains(self, v, slack=0.0):
        width = self.hi - self.lo
        return self.lo - slack * width <= v <= self.hi + slack * width


@dataclass(frozen=True)
class AuxData:
    """Observation-free auxiliary data: offsets z, covariates y, optional trials.

    The Fisher information depends only on this, never on observed values.
    """

    z: np.ndarray
    y: np.ndarray
    trials: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        object.__setattr__(self, "y", y)
        if self.trials is not None:
            object.__setattr__(self, "trials", np.asarray(self.trials, dtype=float))
        if self.z.ndim != 1 or self.z.shape[0] != self.y.shape[0]:
            raise InputError("z and y must have matching observation counts")
        if self.z.shape[0] < 1:
            raise InputError("at least one observation is required")
        if np.any(self.z == 0.0):
            idx = int(np.nonzero(self.z == 0.0)[0][0])
            raise InputError(f"offsets z must all be non-zero (violated at row {idx})")

    @property
    def n(self):
        return self.z.shape[0]

    def trials_at(self, l):
        return 1.0 if self.trials is None else float(self.trials[l])


@dataclass(frozen=True)
class Dataset(AuxData):
    """Auxiliary data plus observed values x."""

    x: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.x is None:
            raise InputError("Dataset requires observations x")
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        if self.x.shape != self.z.shape:
            raise InputError("x and z must have equal length")

    def validate_support(self, fam: ExpFamily):
        for l in range(self.n):
            if not fam.support_check(self.x[l], self.trials_at(l)):
                raise InputError(
                    f"observation {self.x[l]} at row {l} is outside the {fam.kind.value} support"
                )

    @property
    def aux(self):
        return AuxData(self.z, self.y, self.trials)


@dataclass(frozen=True)
class Factorization:
    """Declared factorization of the mean structure through N parameter combinations."""

    n_combos: int
    combos: Callable  # theta -> sequence of n_combos values (AD-generic)
    hazard_from_combos: Optional[Callable] = None  # (combo_values, y) -> hazard


@dataclass(frozen=True)
class MeanModel:
    """Per-observation mean model mu_l(theta; z_l, y_l).

    ``mean(theta, z, y_row)`` must be evaluable with AD numbers for theta.
    Hazard-embedded models set ``hazard`` with mu_l = z_l * h(theta, y_l);
    the covariate is then y_row[0] (an age/time).  Immutable; evaluation is
    pure, so models are safe for concurrent use.
    """

    name: str
    p: int
    param_box: tuple
    mean: Callable
    hazard: Optional[Callable] = None
    factorization: Optional[Factorization] = None
    design: Optional[np.ndarray] = None
    link: Optional[str] = None
    default_aux: Optional[AuxData] = None
    hazard_probe_range: Optional[tuple] = None

    def box_contains(self, theta, slack=0.0):
        return all(r.contains(float(t), slack) for r, t in zip(self.param_box, theta))

    def box_center(self):
        """Geometric center in each coordinate's sampling scale."""
        out = []
        for r in self.param_box:
            if r.scale == "log":
                out.append(math.exp(0.5 * (math.log(r.lo) + math.log(r.hi))))
            else:
                out.append(0.5 * (r.lo + r.hi))
        return np.array(out)


@dataclass(frozen=True)
class CustomLikelihoodModel:
    """Model supplying its log-likelihood directly, bypassing the family layer."""

    name: str
    p: int
    param_box: tuple
    loglik: Callable  # (theta, x) -> scalar, AD-generic in theta


def _dot(row, theta):
    total = row[0] * theta[0]
    for j in range(1, len(theta)):
        total = total + row[j] * theta[j]
    return total


def _design_aux(A):
    return AuxData(z=np.ones(A.shape[0]), y=A)


def _check_design(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InputError(f"design matrix must be 2-D and non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("design matrix contains non-finite entries")
    if np.any(np.all(A == 0.0, axis=0)):
        # intentionally constructible: an all-zero column is a redundancy demo
        import warnings

        warnings.warn("design matrix has an all-zero column; model is degenerate", stacklevel=3)
    return A


def poisson_glm(A):
    """Log-link Poisson regression: mu_l = exp(sum_j A_lj theta_j)."""
    A = _check_design(A)
    p = A.shape[1]

    def mean(theta, z, y):
        return z * ad.exp(_dot(y, theta))

    return MeanModel(
        name="poisson_glm",
        p=p,
        param_box=tuple(ParamRange(-10.0, 10.0, "linear") for _ in range(p)),
        mean=mean,
        design=A,
        link="log",
        default_aux=_design_aux(A),
    )


def linear_gaussian(A):
    """Identity-link normal regression: mu_l = sum_j A_lj theta_j."""
    A = _check_design(A)
    p = A.shape[1]

    def mean(theta, z, y):
        return z * _dot(y, theta)

    return MeanModel(
        name="linear_gaussian",
        p=p,
        param_box=tuple(ParamRange(-10.0, 10.0, "linear") for _ in range(p)),
        mean=mean,
        design=A,
        link="identity",
        default_aux=_design_aux(A),
    )


# -- multistage incidence model ------------------------------------------


def armitage_doll(k):
    """Multistage incidence hazard h(theta, t) = (prod_i theta_i) t^(k-1)/(k-1)!.

    Globally redundant for k >= 2: the hazard depends on theta only through
    the single combination G_1 = prod_i theta_i, declared as the model's
    factorization.  The 1/(k-1)! normalization keeps G_1 the bare product.
    """
    k = int(k)
    if k < 2:
        raise InputError(f"stage count k must be >= 2, got {k}")
    norm = 1.0 / math.factorial(k - 1)

    def hazard(theta, t):
        prod = theta[0]
        for i in range(1, k):
            prod = prod * theta[i]
        return prod * (float(t) ** (k - 1) * norm)

    def mean(theta, z, y):
        return z * hazard(theta, y[0])

    def combos(theta):
        prod = theta[0]
        for i in range(1, k):
            prod = prod * theta[i]
        return (prod,)

    def hazard_from_combos(g, t):
        return g[0] * (float(t) ** (k - 1) * norm)

    ages = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    return MeanModel(
        name=f"armitage_doll_k{k}",
        p=k,
        param_box=tuple(ParamRange(1e-3, 1e1, "log") for _ in range(k)),
        mean=mean,
        hazard=hazard,
        factorization=Factorization(1, combos, hazard_from_combos),
        default_aux=AuxData(z=np.full(ages.shape, 1e2), y=ages),
        hazard_probe_range=(1.0, 6.0),
    )


# -- two-mutation clonal expansion model -----------------------------------

# Parameter order: (Xnu, alpha, beta, mu) = (initiation rate x stem cells,
# clonal division rate, clonal death rate, malignant conversion rate).
# The box is supercritical (alpha > beta) with small mu: the regime where
# all three estimable combinations leave a visible imprint on the hazard
# and the hazard stays within floating-point comfort for Poisson means.
_TM_BOX = (
    ParamRange(1e-2, 1e-1, "log"),
    ParamRange(5e-1, 1.2, "log"),
    ParamRange(1e-2, 3e-1, "log"),
    ParamRange(1e-4, 4e-4, "log"),
)
_TM_AGES = np.array([0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 16.0])


def _tm_check(theta):
    Xnu, alpha, beta, mu = (ad.value_of(t) for t in theta)
    if not (Xnu > 0.0 and alpha > 0.0 and mu > 0.0 and beta >= 0.0):
        raise InputError(
            f"two-mutation parameters require Xnu, alpha, mu > 0 and beta >= 0, got {(Xnu, alpha, beta, mu)}"
        )


def two_mutation_hazard(theta, t):
    """Closed-form constant-parameter two-mutation hazard.

    Solves the clone-survival Riccati equation exactly through the roots
    r+- = [(alpha-beta-mu) +- sqrt((alpha-beta-mu)^2 + 4 alpha mu)] / 2:

        h(t) = Xnu * mu * (1 - e^(-g t)) / (r+ e^(-g t) - r-),  g = r+ - r-.

    The smaller-magnitude root is recovered from r+ r- = -alpha mu, which
    avoids the cancellation the quadratic formula suffers; since the root
    product is strictly negative the roots can never be confluent, so no
    separate series branch is needed.  The numerator uses expm1 so the
    t -> 0 limit h/t -> Xnu*mu holds to full precision.
    """
    _tm_check(theta)
    Xnu, alpha, beta, mu = theta
    s = alpha - beta - mu
    gam = ad.sqrt(s * s + 4.0 * (alpha * mu))
    if ad.value_of(s) >= 0.0:
        rp = 0.5 * (s + gam)
        rm = -(alpha * mu) / rp
    else:
        rm = 0.5 * (s - gam)
        rp = -(alpha * mu) / rm
    t = float(t)
    em = ad.exp(-gam * t)
    numer = -ad.expm1(-gam * t)
    return Xnu * mu * numer / (rp * em - rm)


def two_mutation_hazard_ode(theta, t, rtol=1e-11, atol=1e-14):
    """Independent oracle: integrate the clone-survival Riccati equation.

    u' = mu + (alpha - beta - mu) u - alpha u^2 with u(0) = 0 gives
    h(t) = Xnu * u(t).  Uses an adaptive RK integrator at tolerances well
    below the 1e-8 agreement the closed form is held to.
    """
    _tm_check(theta)
    Xnu, alpha, beta, mu = (float(v) for v in theta)
    t = float(t)
    if t <= 0.0:
        raise InputError(f"hazard oracle requires t > 0, got {t}")

    def rhs(_, u):
        return [mu + (alpha - beta - mu) * u[0] - alpha * u[0] * u[0]]

    sol = solve_ivp(rhs, (0.0, t), [0.0], method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise InternalConsistencyError(f"hazard ODE integration failed: {sol.message}")
    return Xnu * float(sol.y[0, -1])


def two_mutation_consistency_check(theta, times, tol=1e-8):
    """Raise unless the closed form and the ODE oracle agree to ``tol`` relative."""
    for t in times:
        a = ad.value_of(two_mutation_hazard(theta, t))
        b = two_mutation_hazard_ode(theta, t)
        rel = abs(a - b) / max(abs(b), 1e-300)
        if rel > tol:
            raise InternalConsistencyError(
                f"two-mutation closed form and ODE oracle disagree at t={t}: "
                f"{a!r} vs {b!r} (relative {rel:.3e})"
            )


def two_mutation():
    """Constant-parameter two-mutation clonal expansion model (4 parameters)."""

    def mean(theta, z, y):
        return z * two_mutation_hazard(theta, y[0])

    return MeanModel(
        name="two_mutation",
        p=4,
        param_box=_TM_BOX,
        mean=mean,
        hazard=two_mutation_hazard,
        default_aux=AuxData(z=np.full(_TM_AGES.shape, 1e4), y=_TM_AGES),
        hazard_probe_range=(2.0, 6.0),
    )


# -- conditional-rank demonstration ---------------------------------------


def cond_demo():
    """Two-parameter model with mu_l = theta_1 y_l1 + theta_1 theta_2 y_l2.

    The mean Jacobian has rank 2 away from theta_1 = 0 and rank 1 exactly on
    that hyperplane: a minimal conditionally-full-rank exemplar (normal
    family, identity link).  Random sampling almost surely misses the
    hyperplane, which is why classification samplers accept pinned points.
    """

    def mean(theta, z, y):
        return z * (theta[0] * y[0] + theta[0] * theta[1] * y[1])

    rows = np.array(
        [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [1.0, 2.0], [3.0, 1.0]]
    )
    return MeanModel(
        name="cond_demo",
        p=2,
        param_box=(ParamRange(-2.0, 2.0), ParamRange(-2.0, 2.0)),
        mean=mean,
        default_aux=AuxData(z=np.ones(rows.shape[0]), y=rows),
    )


# -- quartic counterexample ------------------------------------------------


def quartic_counterexample(p):
    """Custom likelihood L(x|theta) = -sum_i (x_i - theta_i)^4 (plus a constant).

    Not an exponential-family embedding.  The gradient vanishes only at
    theta = x, where the Hessian -12 diag((x_i - theta_i)^2) has rank 0 even
    though the maximum is unique: full Hessian rank is sufficient, not
    necessary, for an isolated maximum.
    """
    p = int(p)
    if p < 1:
        raise InputError(f"dimension must be >= 1, got {p}")

    def loglik(theta, x):
        total = -((float(x[0]) - theta[0]) ** 4)
        for i in range(1, p):
            total = total - (float(x[i]) - theta[i]) ** 4
        return total

    return CustomLikelihoodModel(
        name=f"quartic_p{p}",
        p=p,
        param_box=tuple(ParamRange(-10.0, 10.0) for _ in range(p)),
        loglik=loglik,
    )


# -- registry for the CLI ----------------------------------------------------


def build_model(name, **kwargs):
    """Construct a zoo model by name; unknown names raise InputError."""
    if name == "poisson_glm":
        return poisson_glm(kwargs["design"])
    if name == "linear_gaussian":
        return linear_gaussian(kwargs["design"])
    if name == "armitage_doll":
        return armitage_doll(kwargs.get("k", 4))
    if name == "two_mutation":
        return two_mutation()
    if name == "cond_demo":
        return cond_demo()
    if name == "quartic":
        return quartic_counterexample(kwargs.get("p", 3))
    raise InputError(f"unknown model {name!r}")
