"""Curvature models ``B_k`` approximating the Hessian of the smooth term.

Two models share the same small interface used by the solver:
``matvec(v)`` returns ``B v`` and ``update(d, y, k, x=None)`` is called after
every successful step with ``d = x_{k+1} - x_k`` and
``y = grad f(x_{k+1}) - grad f(x_k)``.
"""

import math

import numpy as np
import scipy.linalg

from ._validation import check_int, check_positive


class UnsupportedCapability(NotImplementedError):
    """Raised when a problem lacks an oracle a solver mode needs (e.g. Hessian products)."""


def default_xi_k(k):
    """``xi_k = 1 / ln(k + 2)``: positive, tends to 0, and ``xi_k ln k`` stays bounded below."""
    return 1.0 / math.log(k + 2.0)


class SkipPolicy:
    """Admission test ``d^T y >= min(xi, xi_k ||d||^2)`` for quasi-Newton pairs."""

    def __init__(self, xi=1e-8, xi_k=default_xi_k):
        self.xi = check_positive(xi, "xi")
        self.xi_k = xi_k

    def admits(self, d, y, k):
        dd = float(np.dot(d, d))
        if dd == 0.0:
            return False
        return float(np.dot(d, y)) >= min(self.xi, self.xi_k(k) * dd)


class CompactLBFGS:
    """Limited-memory BFGS approximation of the Hessian in compact form.

    ``B = gamma I - [S Y] K^{-1} [S Y]^T`` with
    ``K = [[S^T S / gamma, L / gamma], [L^T / gamma, -D]]``, where ``L`` and
    ``D`` are the strictly lower and diagonal parts of ``S^T Y``. ``gamma`` is
    ``y^T y / s^T y`` of the newest stored pair.

    Parameters
    ----------
    n : int
        Dimension.
    memory : int, default=10
        Number of stored pairs.
    skip : SkipPolicy, optional
        Admission rule; defaults to ``SkipPolicy()``.
    gamma0 : float, default=1.0
        Scaling used before the first pair is admitted.
    """

    def __init__(self, n, memory=10, skip=None, gamma0=1.0):
        self.n = check_int(n, "n", minimum=1)
        self.memory = check_int(memory, "memory", minimum=1)
        self.skip = SkipPolicy() if skip is None else skip
        self.gamma0 = check_positive(gamma0, "gamma0")
        self.gamma = self.gamma0
        self._s = []
        self._y = []
        self._S = np.zeros((self.n, 0))
        self._Y = np.zeros((self.n, 0))
        self._lu = None
        self.n_skipped = 0

    @property
    def n_pairs(self):
        return len(self._s)

    def update(self, d, y, k, x=None):
        """Offer the pair ``(d, y)`` seen at outer iteration ``k``.

        Returns ``True`` when the pair was stored, ``False`` when the skipping rule rejected it.
        """
        d = np.asarray(d, dtype=float)
        y = np.asarray(y, dtype=float)
        if not self.skip.admits(d, y, k):
            self.n_skipped += 1
            return False
        self._s.append(d.copy())
        self._y.append(y.copy())
        if len(self._s) > self.memory:
            del self._s[0], self._y[0]
        self._rebuild()
        return True

    def _rebuild(self):
        while self._s:
            S = np.column_stack(self._s)
            Y = np.column_stack(self._y)
            s, y = self._s[-1], self._y[-1]
            gamma = float(np.dot(y, y)) / float(np.dot(s, y))
            SY = S.T @ Y
            K = np.block([
                [S.T @ S / gamma, np.tril(SY, -1) / gamma],
                [np.tril(SY, -1).T / gamma, -np.diag(np.diag(SY))],
            ])
            if np.isfinite(K).all() and np.linalg.cond(K) < 1e13:
                self._S, self._Y, self.gamma = S, Y, gamma
                self._lu = scipy.linalg.lu_factor(K)
                return
            # numerically singular middle block: forget the oldest pair
            del self._s[0], self._y[0]
        self._S = np.zeros((self.n, 0))
        self._Y = np.zeros((self.n, 0))
        self._lu = None
        self.gamma = self.gamma0

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if self._lu is None:
            return self.gamma * v
        w = np.concatenate([self._S.T @ v, self._Y.T @ v])
        c = scipy.linalg.lu_solve(self._lu, w)
        m = self._S.shape[1]
        return self.gamma * v - self._S @ c[:m] - self._Y @ c[m:]

    def to_dense(self):
        return np.column_stack([self.matvec(e) for e in np.eye(self.n)])


def exact_hessian_vp(problem, x, v):
    """``grad^2 f(x) v`` for problems that expose ``hessian_vp``."""
    hvp = getattr(problem, "hessian_vp", None)
    if hvp is None:
        raise UnsupportedCapability(f"{type(problem).__name__} has no Hessian-vector product")
    return hvp(x, v)


class ExactHessian:
    """Curvature model that evaluates the true Hessian at the current prox point."""

    def __init__(self, problem, x):
        if getattr(problem, "hessian_vp", None) is None:
            raise UnsupportedCapability(f"{type(problem).__name__} has no Hessian-vector product")
        self.problem = problem
        self.x = np.asarray(x, dtype=float).copy()

    def update(self, d, y, k, x=None):
        if x is not None:
            self.x = np.asarray(x, dtype=float).copy()
        return True

    def matvec(self, v):
        return exact_hessian_vp(self.problem, self.x, v)
