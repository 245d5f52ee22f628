"""scikit-learn style wrappers around the solvers."""

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .baselines import fista, sparsa
from .bench import mask_density
from .driver import TrssnParams, solve
from .problems import CompressionProblem, LogisticProblem, default_logistic_mu

_SOLVERS = ("trssn-lbfgs", "trssn-exact", "fista", "sparsa")


def _run(problem, solver, tol, max_iter, memory):
    if solver not in _SOLVERS:
        raise ValueError(f"solver must be one of {_SOLVERS}, got {solver!r}")
    if solver.startswith("trssn"):
        params = TrssnParams(tol=tol, max_iter=max_iter, memory=memory,
                             hessian="exact" if solver == "trssn-exact" else "lbfgs")
        return solve(problem, params)
    runner = fista if solver == "fista" else sparsa
    return runner(problem, tol=tol, max_iter=max_iter)


class SparseLogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression with an l1 penalty and no intercept.

    Parameters
    ----------
    mu : float or None, default=None
        Penalty weight. ``None`` uses ``0.01 ||X^T y||_inf / n_samples`` with
        ``y`` in {-1, +1}.
    solver : {'trssn-lbfgs', 'trssn-exact', 'fista', 'sparsa'}, default='trssn-lbfgs'
    tol : float, default=1e-8
    max_iter : int, default=1000
    memory : int, default=10
        L-BFGS memory for ``'trssn-lbfgs'``.

    Attributes
    ----------
    classes_ : ndarray of shape (2,)
    coef_ : ndarray of shape (1, n_features)
    mu_ : float
        The penalty weight actually used.
    n_iter_ : int
    converged_ : bool
    trace_ : list of dict
    """

    def __init__(self, mu=None, solver="trssn-lbfgs", tol=1e-8, max_iter=1000, memory=10):
        self.mu = mu
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.memory = memory

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=float)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"binary targets required, got {self.classes_.size} classes")
        signs = np.where(y == self.classes_[1], 1.0, -1.0)
        self.mu_ = default_logistic_mu(X, signs) if self.mu is None else float(self.mu)
        problem = LogisticProblem(X, signs, self.mu_)
        result = _run(problem, self.solver, self.tol, self.max_iter, self.memory)
        self.coef_ = result.x.reshape(1, -1)
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.trace_ = result.trace
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr", dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        scores = X @ self.coef_.ravel()
        return np.asarray(scores).ravel()

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(int)]


class DiffusionMaskCompressor(TransformerMixin, BaseEstimator):
    """Learn a sparse inpainting mask for a grayscale image.

    ``fit`` optimizes mask weights ``c`` in [0, 1]; ``transform`` returns the
    diffusion reconstruction from the learned mask.

    Parameters
    ----------
    mu : float, default=0.01
        Sparsity weight on the mask.
    solver : {'trssn-lbfgs', 'sparsa'}, default='trssn-lbfgs'
    tol : float, default=1e-7
    max_iter : int, default=2000
    memory : int, default=10

    Attributes
    ----------
    mask_ : ndarray of shape (h, w)
    density_ : float
        Percentage of pixels with positive weight.
    n_iter_ : int
    converged_ : bool
    trace_ : list of dict
    """

    def __init__(self, mu=0.01, solver="trssn-lbfgs", tol=1e-7, max_iter=2000, memory=10):
        self.mu = mu
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.memory = memory

    def fit(self, X, y=None):
        image = check_array(X, dtype=float)
        if self.solver not in ("trssn-lbfgs", "sparsa"):
            raise ValueError("solver must be 'trssn-lbfgs' or 'sparsa'")
        self.problem_ = CompressionProblem(image, self.mu)
        result = _run(self.problem_, self.solver, self.tol, self.max_iter, self.memory)
        self.mask_ = result.x.reshape(image.shape)
        self.density_ = mask_density(result.x)
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.trace_ = result.trace
        return self

    def transform(self, X=None):
        """Reconstruction from the learned mask; ``X`` is accepted for API symmetry."""
        check_is_fitted(self, "mask_")
        return self.problem_.reconstruct(self.mask_.ravel()).reshape(self.mask_.shape)
