"""Exponential-family likelihood kernels.

Three families are shipped: Poisson, binomial with known per-observation
trial counts, and normal with known scale.  Together they cover the cases
with a non-vanishing third cumulant derivative (Poisson, binomial) and the
case where it vanishes identically (normal).  The log-likelihood of a sample
is

    sum_i [ (x_i * zeta_i - b(zeta_i)) / a(phi) + c(x_i, phi) ]

with natural parameter zeta, cumulant function b, dispersion function a and
log base measure c.  The dispersion phi is a known constant, never a model
parameter.  The natural-parameter domain is the whole real line for all
three families, and b'' > 0 everywhere on it, so b' is invertible.

The cumulant methods accept either floats or :class:`diffkit.SecondOrderNumber`
values, which is what lets likelihoods be differentiated through the natural
parameter.  ``c(x, phi)`` is parameter-free and therefore irrelevant to every
rank computation; it is implemented exactly so absolute likelihood values are
right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import diffkit as ad
from .errors import DomainError, InputError

_LOG_2PI = math.log(2.0 * math.pi)


class FamilyKind(str, Enum):
    POISSON = "poisson"
    BINOMIAL = "binomial"
    NORMAL = "normal"


@dataclass(frozen=True)
class ExpFamily:
    """One-parameter exponential family with known dispersion.

    ``trials`` arguments are the per-observation binomial trial counts; the
    other families ignore them.  Instances are immutable and all methods are
    pure, so families are safe to share across threads.
    """

    kind: FamilyKind
    phi: float = 1.0

    def __post_init__(self):
        if self.phi <= 0.0 or not math.isfinite(self.phi):
            raise InputError(f"dispersion phi must be a positive real, got {self.phi}")
        if self.kind is not FamilyKind.NORMAL and self.phi != 1.0:
            raise InputError(f"{self.kind.value} family has fixed dispersion a(phi) = 1")

    # -- defining functions ------------------------------------------

    def dispersion(self):
        """a(phi); positive by construction."""
        return self.phi if self.kind is FamilyKind.NORMAL else 1.0

    def cumulant(self, zeta, trials=1.0):
        """b(zeta); strictly convex on the whole real line."""
        if self.kind is FamilyKind.POISSON:
            return ad.exp(zeta)
        if self.kind is FamilyKind.NORMAL:
            return zeta * zeta * 0.5 if isinstance(zeta, ad.SecondOrderNumber) else 0.5 * zeta * zeta
        return trials * ad.softplus(zeta)

    def cumulant_d1(self, zeta, trials=1.0):
        """b'(zeta), the mean as a function of the natural parameter."""
        if self.kind is FamilyKind.POISSON:
            return ad.exp(zeta)
        if self.kind is FamilyKind.NORMAL:
            return zeta
        return trials * ad.sigmoid(zeta)

    def cumulant_d2(self, zeta, trials=1.0):
        """b''(zeta) > 0 everywhere."""
        if self.kind is FamilyKind.POISSON:
            return ad.exp(zeta)
        if self.kind is FamilyKind.NORMAL:
            return 1.0 if not isinstance(zeta, ad.SecondOrderNumber) else ad.constant(1.0, zeta.grad.shape[0])
        s = ad.sigmoid(zeta)
        return trials * s * (1.0 - s)

    def cumulant_d3(self, zeta, trials=1.0):
        """b'''(zeta); identically zero for the normal family."""
        if self.kind is FamilyKind.POISSON:
            return ad.exp(zeta)
        if self.kind is FamilyKind.NORMAL:
            return 0.0 if not isinstance(zeta, ad.SecondOrderNumber) else ad.constant(0.0, zeta.grad.shape[0])
        s = ad.sigmoid(zeta)
        return trials * s * (1.0 - s) * (1.0 - 2.0 * s)

    def log_base_measure(self, x, trials=1.0):
        """c(x, phi); theta-free, so it never enters a rank computation."""
        x = float(x)
        if self.kind is FamilyKind.POISSON:
            return -math.lgamma(x + 1.0)
        if self.kind is FamilyKind.NORMAL:
            return -x * x / (2.0 * self.phi) - 0.5 * math.log(2.0 * math.pi * self.phi)
        m = float(trials)
        return math.lgamma(m + 1.0) - math.lgamma(x + 1.0) - math.lgamma(m - x + 1.0)

    # -- mean parameterization ----------------------------------------

    def mean_from_natural(self, zeta, trials=1.0):
        """mu = b'(zeta)."""
        return self.cumulant_d1(zeta, trials)

    def natural_from_mean(self, mu, trials=1.0):
        """Inverse of b': closed form per family.

        Raises for means on or outside the boundary of the mean range
        (mu <= 0 for Poisson, mu outside (0, trials) for binomial).
        """
        v = ad.value_of(mu)
        if self.kind is FamilyKind.POISSON:
            if v <= 0.0:
                raise DomainError(f"Poisson mean must be positive, got {v}")
            return ad.log(mu)
        if self.kind is FamilyKind.NORMAL:
            return mu
        m = float(trials)
        if not 0.0 < v < m:
            raise DomainError(f"binomial mean must lie strictly inside (0, {m}), got {v}")
        return ad.log(mu) - ad.log(m - mu if isinstance(mu, ad.SecondOrderNumber) else m - v)

    def variance(self, zeta, trials=1.0):
        """Var(x) = a(phi) * b''(zeta), positive on the whole domain."""
        return self.dispersion() * self.cumulant_d2(zeta, trials)

    # -- support -------------------------------------------------------

    def support_check(self, x, trials=1.0):
        """True if ``x`` is an admissible observation.

        Non-integer counts are deliberately admitted for Poisson and binomial
        (needed for fitted-point diagnostics where x is set to the model mean).
        """
        x = float(x)
        if not math.isfinite(x):
            return False
        if self.kind is FamilyKind.POISSON:
            return x >= 0.0
        if self.kind is FamilyKind.BINOMIAL:
            return 0.0 <= x <= float(trials)
        return True

    def simulate(self, rng, mu, trials=None):
        """Draw one dataset of observations with the given means."""
        mu = np.asarray(mu, dtype=float)
        if self.kind is FamilyKind.POISSON:
            return rng.poisson(mu).astype(float)
        if self.kind is FamilyKind.NORMAL:
            return rng.normal(mu, math.sqrt(self.phi))
        m = np.asarray(trials, dtype=float)
        return rng.binomial(m.astype(int), mu / m).astype(float)


def poisson():
    return ExpFamily(FamilyKind.POISSON)


def binomial():
    return ExpFamily(FamilyKind.BINOMIAL)


def normal(phi=1.0):
    return ExpFamily(FamilyKind.NORMAL, phi)


def log_likelihood(fam, zeta, x, trials=None):
    """Total log-likelihood sum_i [(x_i zeta_i - b(zeta_i))/a + c(x_i, phi)].

    ``zeta`` and ``x`` are equal-length vectors; ``trials`` is required for
    the binomial family.  Domain violations report the offending index.
    """
    zeta = np.asarray(zeta, dtype=float)
    x = np.asarray(x, dtype=float)
    if zeta.shape != x.shape:
        raise InputError(f"zeta and x must have equal length, got {zeta.shape} and {x.shape}")
    if fam.kind is FamilyKind.BINOMIAL:
        if trials is None:
            raise InputError("binomial family requires per-observation trial counts")
        m = np.asarray(trials, dtype=float)
    else:
        m = np.ones_like(x)
    a = fam.dispersion()
    total = 0.0
    for i in range(x.shape[0]):
        if not math.isfinite(zeta[i]):
            raise InputError(f"natural parameter at index {i} is not finite")
        if not fam.support_check(x[i], m[i]):
            raise InputError(f"observation at index {i} is outside the family support: {x[i]}")
        total += (x[i] * zeta[i] - fam.cumulant(zeta[i], m[i])) / a + fam.log_base_measure(x[i], m[i])
    if not math.isfinite(total):
        raise DomainError("log-likelihood evaluated to a non-finite value")
    return total
