"""Proximity operators, their generalized derivatives and the residual calculus.

Throughout, the metric is a scalar multiple of the identity, ``Lambda = lam * I``.
A prox oracle exposes

``value(x)``
    the nonsmooth term ``phi(x)`` (``+inf`` outside its domain),
``prox(z, lam)``
    ``argmin_y phi(y) + lam/2 ||y - z||^2``,
``gderiv(z, lam)``
    the 0/1 diagonal of an element ``D`` of the Clarke derivative of ``prox`` at ``z``,
``preimage(x, lam)``
    per-coordinate bounds ``(lo, hi)`` such that ``prox(z) == x`` iff ``lo <= z <= hi``.

Only separable terms are supported, so ``D`` is always diagonal.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive


def prox_l1(z, mu, lam):
    """Soft-thresholding, the prox of ``mu * ||.||_1`` in the metric ``lam * I``.

    Examples
    --------
    >>> prox_l1(np.array([2.0, -0.3, 0.6]), 0.5, 1.0)
    array([1.5, 0. , 0.1])
    """
    z = np.asarray(z, dtype=float)
    return np.maximum(np.abs(z) - mu / lam, 0.0) * np.sign(z)


def gderiv_l1(z, mu, lam):
    """Diagonal of the generalized derivative of :func:`prox_l1`.

    Entries are 0 where ``|z_i| <= mu/lam`` (boundary included) and 1 elsewhere.
    """
    z = np.asarray(z, dtype=float)
    return (np.abs(z) > mu / lam).astype(float)


def prox_box_l1(z, mu, lam):
    """Prox of ``mu * ||.||_1 + indicator([0, 1]^n)``: shrink, then clamp to [0, 1]."""
    return np.clip(prox_l1(z, mu, lam), 0.0, 1.0)


def gderiv_box_l1(z, mu, lam):
    """0 where ``z_i <= mu/lam`` or ``z_i >= mu/lam + 1``, 1 strictly inside."""
    z = np.asarray(z, dtype=float)
    t = mu / lam
    return ((z > t) & (z < t + 1.0)).astype(float)


class L1Prox:
    """Oracle for ``phi(x) = mu * ||x||_1``.

    Parameters
    ----------
    mu : float
        Regularization weight, ``mu >= 0``. ``mu = 0`` gives the identity prox.
    """

    separable = True

    def __init__(self, mu):
        self.mu = check_positive(mu, "mu", strict=False)

    def value(self, x):
        return self.mu * float(np.sum(np.abs(x)))

    def value_decrease(self, x, x_new):
        """``phi(x) - phi(x_new)`` summed from per-coordinate differences."""
        return self.mu * float(np.sum(np.abs(x) - np.abs(x_new)))

    def prox(self, z, lam):
        return prox_l1(z, self.mu, lam)

    def gderiv(self, z, lam):
        return gderiv_l1(z, self.mu, lam)

    def preimage(self, x, lam):
        x = np.asarray(x, dtype=float)
        t = self.mu / lam
        shifted = x + np.sign(x) * t
        lo = np.where(x == 0, -t, shifted)
        hi = np.where(x == 0, t, shifted)
        return lo, hi

    def __repr__(self):
        return f"L1Prox(mu={self.mu!r})"


class BoxL1Prox:
    """Oracle for ``phi(x) = mu * ||x||_1 + indicator([0, 1]^n)``."""

    separable = True

    def __init__(self, mu):
        self.mu = check_positive(mu, "mu", strict=False)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0):
            return np.inf
        return self.mu * float(np.sum(x))

    def value_decrease(self, x, x_new):
        if not np.isfinite(self.value(x_new)):
            return -np.inf
        return self.mu * float(np.sum(np.asarray(x) - np.asarray(x_new)))

    def prox(self, z, lam):
        return prox_box_l1(z, self.mu, lam)

    def gderiv(self, z, lam):
        return gderiv_box_l1(z, self.mu, lam)

    def preimage(self, x, lam):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("x lies outside [0, 1]^n; it has no preimage under the prox")
        t = self.mu / lam
        lo = np.where(x == 0, -np.inf, x + t)
        hi = np.where(x == 1, np.inf, x + t)
        return lo, hi

    def __repr__(self):
        return f"BoxL1Prox(mu={self.mu!r})"


def moreau_envelope(z, prox_oracle, lam):
    """``env(z) = min_y phi(y) + lam/2 ||z - y||^2``; its gradient is ``lam * (z - prox(z))``."""
    p = prox_oracle.prox(z, lam)
    return prox_oracle.value(p) + 0.5 * lam * float(np.dot(z - p, z - p))


@dataclass(frozen=True)
class ResidualPair:
    """Normal-map residual at ``z``, natural residual at ``prox(z)`` and ``chi``."""

    f_nor: np.ndarray
    f_nat: np.ndarray
    chi: float

    @property
    def nor_norm(self):
        return float(np.linalg.norm(self.f_nor))

    @property
    def nat_norm(self):
        return float(np.linalg.norm(self.f_nat))


def residuals_from(z, x, grad, prox_oracle, lam):
    """Build the residuals from an already evaluated ``x = prox(z)`` and ``grad = grad f(x)``."""
    f_nor = grad + lam * (z - x)
    f_nat = x - prox_oracle.prox(x - grad / lam, lam)
    return ResidualPair(f_nor=f_nor, f_nat=f_nat, chi=float(np.linalg.norm(f_nor)) / np.sqrt(lam))


def normal_map(z, grad_f, prox_oracle, lam):
    """Evaluate ``F_nor(z) = grad f(prox z) + lam (z - prox z)`` and the companion residuals.

    Parameters
    ----------
    z : ndarray
        Point in the normal-map space.
    grad_f : callable
        ``x -> grad f(x)``.
    prox_oracle : prox oracle
        See the module docstring.
    lam : float
        Metric parameter, ``lam > 0``.

    Returns
    -------
    ResidualPair
        ``f_nat`` is evaluated at ``prox(z)``; ``chi = ||f_nor|| / sqrt(lam)``.
    """
    lam = check_positive(lam, "lam")
    z = np.asarray(z, dtype=float)
    x = prox_oracle.prox(z, lam)
    return residuals_from(z, x, np.asarray(grad_f(x), dtype=float), prox_oracle, lam)


def natural_residual(x, grad, prox_oracle, lam):
    """``F_nat(x) = x - prox(x - grad/lam)``."""
    return x - prox_oracle.prox(x - grad / lam, lam)


def initial_z(x0, grad0, prox_oracle, lam):
    """Point ``z`` with ``prox(z) == x0`` that minimizes ``||F_nor(z)||``.

    On the preimage box of ``x0`` the normal map equals ``grad0 + lam (z - x0)``,
    so the minimizer is the projection of ``x0 - grad0/lam`` onto that box.
    """
    lam = check_positive(lam, "lam")
    if not getattr(prox_oracle, "separable", False) or not hasattr(prox_oracle, "preimage"):
        raise TypeError(f"{prox_oracle!r} does not provide preimage intervals")
    x0 = np.asarray(x0, dtype=float)
    lo, hi = prox_oracle.preimage(x0, lam)
    return np.clip(x0 - np.asarray(grad0, dtype=float) / lam, lo, hi)
