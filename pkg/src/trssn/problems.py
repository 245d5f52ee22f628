"""Built-in composite problems ``min_x f(x) + phi(x)``.

Each problem carries its nonsmooth term as ``problem.prox`` (see :mod:`trssn.prox`)
and exposes ``value(x)``, ``gradient(x)``, ``value_grad(x)`` for the smooth term.
``hessian_vp`` is ``None`` when no Hessian product is available.
``lipschitz`` is a fixed estimate of the gradient's Lipschitz modulus, or
``None`` when the solver has to estimate it on the fly (``initial_lipschitz``
then seeds the estimate).
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import expit

from ._validation import as_float_vector, check_positive
from .prox import BoxL1Prox, L1Prox, prox_l1


class SolverFailure(RuntimeError):
    """An oracle could not be evaluated (e.g. a singular linear solve)."""


class CompositeProblem:
    """Shared helpers; subclasses implement ``value_grad`` and set ``prox``/``n``."""

    hessian_vp = None
    lipschitz = None
    initial_lipschitz = None
    name = "problem"

    def value(self, x):
        return self.value_grad(x)[0]

    def gradient(self, x):
        return self.value_grad(x)[1]

    def psi(self, x):
        return self.value(x) + self.prox.value(x)

    def f_decrease(self, x, x_new, f_old, f_new):
        """``f(x) - f(x_new)``; subclasses override with a cancellation-free form."""
        return f_old - f_new

    def default_lambda(self, L):
        return min(L / 2.0, 0.4)

    def default_x0(self):
        return np.zeros(self.n)


def estimate_opnorm(A, rtol=1e-6, max_iter=500, safety=1.01, seed=0):
    """Squared spectral norm of ``A`` by power iteration on ``A^T A``, times ``safety``.

    Examples
    --------
    >>> round(estimate_opnorm(np.diag([3.0, 1.0])), 10)
    9.09
    """
    n = A.shape[1]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return safety * est


class LogisticProblem(CompositeProblem):
    """Sparse logistic regression ``(1/N) sum log(1 + exp(-b_i <a_i, x>)) + mu ||x||_1``.

    Parameters
    ----------
    A : array-like or sparse matrix, shape (N, n)
    b : array-like, shape (N,)
        Labels in {-1, +1}.
    mu : float
    """

    name = "logistic"

    def __init__(self, A, b, mu):
        self.A = sp.csr_matrix(A) if sp.issparse(A) else np.asarray(A, dtype=float)
        self.b = as_float_vector(b, "b")
        if not np.all(np.abs(self.b) == 1.0):
            raise ValueError("labels b must be in {-1, +1}")
        if self.b.size != self.A.shape[0]:
            raise ValueError("A and b have inconsistent numbers of rows")
        self.N, self.n = self.A.shape
        self.mu = check_positive(mu, "mu", strict=False)
        self.prox = L1Prox(self.mu)
        self.lipschitz = estimate_opnorm(self.A) / (4.0 * self.N)

    def _margins(self, x):
        return self.b * (self.A @ x)

    def value_grad(self, x):
        t = self._margins(x)
        f = float(np.mean(np.logaddexp(0.0, -t)))
        g = -(self.A.T @ (self.b * expit(-t))) / self.N
        return f, np.asarray(g).ravel()

    def value(self, x):
        return float(np.mean(np.logaddexp(0.0, -self._margins(x))))

    def f_decrease(self, x, x_new, f_old, f_new):
        t = self._margins(x)
        dt = self.b * (self.A @ (x_new - x))
        # softplus(-t) - softplus(-t - dt) = log1p(sigmoid(-t - dt) * expm1(dt))
        small = np.abs(dt) < 30.0
        diff = np.empty_like(t)
        diff[small] = np.log1p(expit(-t[small] - dt[small]) * np.expm1(dt[small]))
        big = ~small
        diff[big] = np.logaddexp(0.0, -t[big]) - np.logaddexp(0.0, -t[big] - dt[big])
        return float(np.mean(diff))

    def hessian_vp(self, x, v):
        t = self._margins(x)
        w = expit(t) * expit(-t)
        return np.asarray(self.A.T @ (w * (self.A @ v))).ravel() / self.N


def default_logistic_mu(A, b):
    """``0.01 ||A^T b||_inf / N``."""
    N = A.shape[0]
    return 0.01 * float(np.max(np.abs(A.T @ b))) / N


def make_logistic_data(n_samples=1000, n_features=100, density=0.1, seed=0):
    """Random sparse classification data with a sparse ground-truth separator."""
    rng = np.random.default_rng(seed)
    A = sp.random(n_samples, n_features, density=density, format="csr",
                  random_state=rng, data_rvs=rng.standard_normal)
    w = np.zeros(n_features)
    support = rng.choice(n_features, size=max(1, n_features // 10), replace=False)
    w[support] = rng.standard_normal(support.size) * 3.0
    p = expit(A @ w)
    b = np.where(rng.random(n_samples) < p, 1.0, -1.0)
    return A, b


def build_laplacian(h, w):
    """5-point Laplacian on an ``h x w`` grid with homogeneous Neumann boundary.

    Off-diagonal entries are 1 for grid neighbours and the diagonal holds minus
    the neighbour count, so every row sums to zero. Pixels are stacked row-major.
    """
    if h < 1 or w < 1:
        raise ValueError("grid dimensions must be positive")
    idx = np.arange(h * w).reshape(h, w)
    rows = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    cols = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    data = np.ones(rows.size)
    adj = sp.coo_matrix((data, (rows, cols)), shape=(h * w, h * w))
    adj = (adj + adj.T).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (adj - sp.diags(deg)).tocsr()


class CompressionProblem(CompositeProblem):
    """Mask optimization for homogeneous-diffusion inpainting.

    ``f(c) = 1/2 ||x(c) - u||^2`` with ``A(c) x(c) = diag(c) u`` and
    ``A(c) = diag(c) + (diag(c) - I) Lap``; ``phi(c) = mu ||c||_1 + indicator([0,1]^N)``.

    Parameters
    ----------
    image : ndarray, shape (h, w)
        Ground truth with values in [0, 1].
    mu : float
        Mask sparsity weight.
    linear_solver : {'direct', 'bicgstab'}, default='direct'
    """

    name = "compression"
    initial_lipschitz = 0.1

    def __init__(self, image, mu, linear_solver="direct"):
        image = np.asarray(image, dtype=float)
        if image.ndim != 2:
            raise ValueError("image must be a 2-D array")
        if image.min() < 0.0 or image.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        if linear_solver not in ("direct", "bicgstab"):
            raise ValueError(f"unknown linear_solver {linear_solver!r}")
        self.shape = image.shape
        self.u = image.ravel().copy()
        self.n = self.u.size
        self.lap = build_laplacian(*self.shape)
        self._eye = sp.identity(self.n, format="csr")
        self.mu = check_positive(mu, "mu", strict=False)
        self.prox = BoxL1Prox(self.mu)
        self.linear_solver = linear_solver
        self._cache_key = None
        self._cache = None

    def default_lambda(self, L):
        return L

    def default_x0(self):
        return np.ones(self.n)

    def system_matrix(self, c):
        return (sp.diags(c) @ (self._eye + self.lap) - self.lap).tocsc()

    def _solver(self, c):
        key = c.tobytes()
        if key == self._cache_key:
            return self._cache
        if np.max(np.abs(c)) < 1e-12:
            raise SolverFailure("mask c is numerically zero; A(c) is singular")
        A = self.system_matrix(c)
        if self.linear_solver == "direct":
            try:
                lu = spla.splu(A)
            except RuntimeError as exc:
                raise SolverFailure(f"A(c) factorization failed (min c={c.min():.3g}, "
                                    f"max c={c.max():.3g}): {exc}") from exc
            solve = lu.solve
            solve_t = lambda r: lu.solve(r, trans="T")  # noqa: E731
        else:
            def _bicg(M, r):
                sol, info = spla.bicgstab(M, r, rtol=1e-10, atol=0.0, maxiter=10 * self.n)
                if info != 0:
                    raise SolverFailure(f"BiCGStab did not converge (info={info})")
                return sol
            At = A.T.tocsc()
            solve = lambda r: _bicg(A, r)  # noqa: E731
            solve_t = lambda r: _bicg(At, r)  # noqa: E731
        x = solve(c * self.u)
        if not np.all(np.isfinite(x)):
            raise SolverFailure("A(c) solve produced non-finite values")
        self._cache_key, self._cache = key, (x, solve_t)
        return self._cache

    def reconstruct(self, c):
        """Inpainted image ``A(c)^{-1} diag(c) u`` as a flat vector."""
        return self._solver(np.asarray(c, dtype=float))[0].copy()

    def value(self, c):
        x, _ = self._solver(np.asarray(c, dtype=float))
        r = x - self.u
        return 0.5 * float(np.dot(r, r))

    def value_grad(self, c):
        c = np.asarray(c, dtype=float)
        x, solve_t = self._solver(c)
        r = x - self.u
        g = (-(self.lap @ x) + self.u - x) * solve_t(r)
        return 0.5 * float(np.dot(r, r)), g


class QuadL1Problem(CompositeProblem):
    """``1/2 (x - b)^T Q (x - b) + mu ||x||_1`` with ``Q`` symmetric positive definite."""

    name = "quadl1"

    def __init__(self, Q, b, mu, lam=1.0):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.b = as_float_vector(b, "b", size=self.Q.shape[0])
        if not np.allclose(self.Q, self.Q.T):
            raise ValueError("Q must be symmetric")
        eig = np.linalg.eigvalsh(self.Q)
        if eig[0] <= 0:
            raise ValueError("Q must be positive definite")
        self.n = self.b.size
        self.mu = check_positive(mu, "mu", strict=False)
        self.prox = L1Prox(self.mu)
        self.lipschitz = float(eig[-1])
        self.lam = check_positive(lam, "lam")

    def default_lambda(self, L):
        return self.lam

    def value_grad(self, x):
        r = x - self.b
        Qr = self.Q @ r
        return 0.5 * float(np.dot(r, Qr)), Qr

    def f_decrease(self, x, x_new, f_old, f_new):
        dx = x_new - x
        return -float(np.dot(self.Q @ (x - self.b), dx)) - 0.5 * float(np.dot(dx, self.Q @ dx))

    def hessian_vp(self, x, v):
        return self.Q @ v


def synthetic_solution(problem):
    """Closed-form minimizer of a :class:`QuadL1Problem` with diagonal ``Q``."""
    q = np.diag(problem.Q)
    if not np.array_equal(problem.Q, np.diag(q)):
        raise NotImplementedError("closed form only available for diagonal Q")
    # per coordinate: shrink b_i by mu / Q_ii
    return prox_l1(problem.b, problem.mu, q)


def make_diagonal_quadl1(n, mu=0.5, seed=0, lam=1.0):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.5, 4.0, n)
    b = rng.standard_normal(n) * 1.5
    return QuadL1Problem(np.diag(q), b, mu, lam=lam)


def make_planted_quadl1(n, n_active, mu=0.1, cond=10.0, seed=0, lam=1.0):
    """Quadratic + l1 instance with a planted minimizer and strict complementarity.

    Returns ``(problem, x_star)``. ``b`` is chosen so that
    ``Q (x* - b) + mu v = 0`` with ``v = sign(x*)`` on the support and
    ``|v_i| <= 0.5`` off it.
    """
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q = U @ np.diag(np.geomspace(1.0, cond, n)) @ U.T
    Q = 0.5 * (Q + Q.T)
    x_star = np.zeros(n)
    support = rng.choice(n, size=n_active, replace=False)
    x_star[support] = rng.choice([-1.0, 1.0], n_active) * rng.uniform(0.5, 2.0, n_active)
    v = rng.uniform(-0.5, 0.5, n)
    v[support] = np.sign(x_star[support])
    b = x_star + mu * np.linalg.solve(Q, v)
    return QuadL1Problem(Q, b, mu, lam=lam), x_star
