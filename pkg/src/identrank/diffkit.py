"""Forward-mode automatic differentiation carrying exact gradients and Hessians.

A :class:`SecondOrderNumber` propagates a scalar value together with its full
gradient and Hessian against ``p`` seed variables in a single evaluation pass.
Cost per arithmetic operation is O(p^2), which is the right trade at desk
scale (p up to ~20).  The Hessian storage is updated only through symmetric
combinations, so outputs are symmetric to exact bitwise equality.

Model code should import the math functions from this module (``exp``,
``log``, ...) rather than from :mod:`math`; they dispatch on the argument
type so the same mean/hazard/likelihood code runs on plain floats and on
seeded numbers.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

_EPS = float(np.finfo(float).eps)
_GRAD_STEP = _EPS ** (1.0 / 3.0)
_HESS_STEP = _EPS ** 0.25


class SecondOrderNumber:
    """Scalar with exact first and second derivatives against p seed variables."""

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad, hess):
        self.value = float(value)
        self.grad = grad
        self.hess = hess

    def __repr__(self):
        return f"SecondOrderNumber({self.value!r}, p={self.grad.shape[0]})"

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, SecondOrderNumber):
            return SecondOrderNumber(
                self.value + other.value, self.grad + other.grad, self.hess + other.hess
            )
        return SecondOrderNumber(self.value + float(other), self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return SecondOrderNumber(-self.value, -self.grad, -self.hess)

    def __sub__(self, other):
        if isinstance(other, SecondOrderNumber):
            return SecondOrderNumber(
                self.value - other.value, self.grad - other.grad, self.hess - other.hess
            )
        return SecondOrderNumber(self.value - float(other), self.grad, self.hess)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, SecondOrderNumber):
            gu, gv = self.grad, other.grad
            cross = gu[:, None] * gv[None, :]
            # cross + cross.T is bitwise symmetric (float * and + commute)
            return SecondOrderNumber(
                self.value * other.value,
                self.value * gv + other.value * gu,
                self.value * other.hess + other.value * self.hess + cross + cross.T,
            )
        c = float(other)
        return SecondOrderNumber(self.value * c, c * self.grad, c * self.hess)

    __rmul__ = __mul__

    def _reciprocal(self):
        if self.value == 0.0:
            raise DomainError("division by a quantity with value 0")
        w = 1.0 / self.value
        outer = self.grad[:, None] * self.grad[None, :]
        return SecondOrderNumber(
            w, -(w * w) * self.grad, -(w * w) * self.hess + (2.0 * w**3) * outer
        )

    def __truediv__(self, other):
        if isinstance(other, SecondOrderNumber):
            return self * other._reciprocal()
        c = float(other)
        if c == 0.0:
            raise DomainError("division by zero constant")
        return self * (1.0 / c)

    def __rtruediv__(self, other):
        return self._reciprocal() * float(other)

    def __pow__(self, n):
        if isinstance(n, SecondOrderNumber):
            return exp(n * log(self))
        n = float(n)
        v = self.value
        if n == 0.0:
            p = self.grad.shape[0]
            return SecondOrderNumber(1.0, np.zeros(p), np.zeros((p, p)))
        if n == 1.0:
            return self
        is_int = n == round(n)
        if v < 0.0 and not is_int:
            raise DomainError(f"fractional power {n} of negative base {v}")
        if v == 0.0 and n < 2.0:
            raise DomainError(f"power {n} of zero base is not twice differentiable")
        f1 = n * v ** (n - 1.0)
        f2 = n * (n - 1.0) * v ** (n - 2.0)
        return _unary(self, v**n, f1, f2)

    def __rpow__(self, base):
        return exp(self * math.log(float(base)))

    # comparisons act on values so model code can branch on magnitudes
    def __lt__(self, other):
        return self.value < _val(other)

    def __le__(self, other):
        return self.value <= _val(other)

    def __gt__(self, other):
        return self.value > _val(other)

    def __ge__(self, other):
        return self.value >= _val(other)

    def __float__(self):
        raise TypeError(
            "implicit float() on SecondOrderNumber would drop derivatives; "
            "use diffkit.value_of"
        )


def _val(x):
    return x.value if isinstance(x, SecondOrderNumber) else float(x)


def value_of(x):
    """Plain float value of ``x``, whether seeded or not."""
    return _val(x)


def _unary(u, f0, f1, f2):
    outer = u.grad[:, None] * u.grad[None, :]
    return SecondOrderNumber(f0, f1 * u.grad, f1 * u.hess + f2 * outer)


# -- elementary functions, generic over float / SecondOrderNumber ------


def exp(x):
    if isinstance(x, SecondOrderNumber):
        w = math.exp(x.value)
        return _unary(x, w, w, w)
    return math.exp(float(x))


def expm1(x):
    if isinstance(x, SecondOrderNumber):
        w = math.exp(x.value)
        return _unary(x, math.expm1(x.value), w, w)
    return math.expm1(float(x))


def log(x):
    v = _val(x)
    if v <= 0.0:
        raise DomainError(f"log of non-positive value {v}")
    if isinstance(x, SecondOrderNumber):
        return _unary(x, math.log(v), 1.0 / v, -1.0 / (v * v))
    return math.log(v)


def log1p(x):
    v = _val(x)
    if v <= -1.0:
        raise DomainError(f"log1p of value {v} <= -1")
    if isinstance(x, SecondOrderNumber):
        w = 1.0 + v
        return _unary(x, math.log1p(v), 1.0 / w, -1.0 / (w * w))
    return math.log1p(v)


def sqrt(x):
    v = _val(x)
    if v < 0.0:
        raise DomainError(f"sqrt of negative value {v}")
    if isinstance(x, SecondOrderNumber):
        if v == 0.0:
            raise DomainError("sqrt is not differentiable at 0")
        w = math.sqrt(v)
        return _unary(x, w, 0.5 / w, -0.25 / (w * v))
    return math.sqrt(v)


def softplus(x):
    """log(1 + exp(x)), evaluated stably on either branch."""
    if _val(x) > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def sigmoid(x):
    """1 / (1 + exp(-x)), evaluated stably on either branch."""
    if _val(x) >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    w = exp(x)
    return w / (1.0 + w)


# -- seeding and extraction ---------------------------------------------


def seed(theta):
    """Seed a parameter vector: component i gets gradient e_i and zero Hessian."""
    theta = [float(t) for t in theta]
    p = len(theta)
    out = []
    for i, t in enumerate(theta):
        g = np.zeros(p)
        g[i] = 1.0
        out.append(SecondOrderNumber(t, g, np.zeros((p, p))))
    return out


def constant(c, p):
    """A seeded constant (zero gradient and Hessian) against p variables."""
    return SecondOrderNumber(float(c), np.zeros(p), np.zeros((p, p)))


def value_gradient_hessian(f, theta):
    """Evaluate ``f`` at ``theta`` returning (value, gradient, Hessian) exactly."""
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    out = f(seed(theta))
    if isinstance(out, SecondOrderNumber):
        return out.value, out.grad.copy(), out.hess.copy()
    return float(out), np.zeros(p), np.zeros((p, p))


def gradient(f, theta):
    """Exact forward-mode gradient of a scalar function of theta."""
    return value_gradient_hessian(f, theta)[1]


def hessian(f, theta):
    """Exact forward-mode Hessian of a scalar function of theta.

    Symmetric by construction: every update to the Hessian block is a
    symmetric combination, so ``H == H.T`` holds bitwise.
    """
    return value_gradient_hessian(f, theta)[2]


# -- finite-difference oracle ---------------------------------------------


def fd_check(f, theta, h=None):
    """Central-difference gradient and Hessian of ``f`` at ``theta``.

    Independent of the forward-mode path; used as the oracle it is checked
    against.  When ``h`` is None the step is chosen per coordinate as
    eps^(1/3) (gradient) or eps^(1/4) (Hessian) times a coordinate scale
    max(|theta_i|, 1e-3 * max(1, ||theta||_inf)) -- the standard
    truncation/round-off balances, made relative so parameters living on
    very different magnitudes (log-scale boxes) keep full accuracy.  Both
    differences are O(h^2) accurate.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    if h is None:
        floor = 1e-3 * max(1.0, float(np.max(np.abs(theta))) if p else 1.0)
        scale = np.maximum(np.abs(theta), floor)
        hg = _GRAD_STEP * scale
        hh = _HESS_STEP * scale
    else:
        hg = hh = float(h) * np.ones(p)

    def fv(t):
        return _val(f(list(t)))

    grad_fd = np.zeros(p)
    for i in range(p):
        e = np.zeros(p)
        e[i] = hg[i]
        grad_fd[i] = (fv(theta + e) - fv(theta - e)) / (2.0 * hg[i])

    hess_fd = np.zeros((p, p))
    f0 = fv(theta)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = hh[i]
        hess_fd[i, i] = (fv(theta + ei) - 2.0 * f0 + fv(theta - ei)) / (hh[i] * hh[i])
        for j in range(i + 1, p):
            ej = np.zeros(p)
            ej[j] = hh[j]
            hess_fd[i, j] = hess_fd[j, i] = (
                fv(theta + ei + ej)
                - fv(theta + ei - ej)
                - fv(theta - ei + ej)
                + fv(theta - ei - ej)
            ) / (4.0 * hh[i] * hh[j])
    return grad_fd, hess_fd
