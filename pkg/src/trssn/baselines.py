"""First-order comparison methods: FISTA and SpaRSA.

Both report convergence through the natural residual measured in the same
metric as the Newton solver, ``sqrt(lam) ||F_nat(x)|| <= tol`` with
``lam = problem.default_lambda(L)``.
"""

from dataclasses import dataclass
import math
import time

import numpy as np

from .driver import SolveResult
from .prox import natural_residual


@dataclass
class FistaState:
    x: np.ndarray
    y: np.ndarray
    t: float
    L: float
    k: int = 0


def fista_step(state, problem):
    """One accelerated proximal-gradient step with constant step ``1/L``."""
    g = problem.gradient(state.y)
    x_new = problem.prox.prox(state.y - g / state.L, state.L)
    t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * state.t**2))
    y_new = x_new + ((state.t - 1.0) / t_new) * (x_new - state.x)
    return FistaState(x=x_new, y=y_new, t=t_new, L=state.L, k=state.k + 1)


@dataclass
class SparsaState:
    x: np.ndarray
    f: float
    grad: np.ndarray
    psi: float
    alpha: float
    ref_value: float
    ref_weight: float
    x_prev: np.ndarray = None
    grad_prev: np.ndarray = None
    k: int = 0
    n_backtracks: int = 0


class SparsaOptions:
    alpha_min = 1e-30
    alpha_max = 1e30
    eta_zh = 0.85
    sigma = 1e-4
    growth = 2.0
    max_backtracks = 50


def _bb_curvature(state, opts):
    """``r^T r / r^T s`` with ``r`` the gradient change and ``s`` the iterate change."""
    s = state.x - state.x_prev
    r = state.grad - state.grad_prev
    rs = float(np.dot(r, s))
    if rs <= 0.0:
        return opts.alpha_max
    return min(max(float(np.dot(r, r)) / rs, opts.alpha_min), opts.alpha_max)


def sparsa_init(problem, x0, L):
    f, g = problem.value_grad(x0)
    psi = f + problem.prox.value(x0)
    return SparsaState(x=x0, f=f, grad=np.asarray(g, dtype=float), psi=psi, alpha=L,
                       ref_value=psi, ref_weight=1.0)


def sparsa_step(state, problem, L, opts=SparsaOptions):
    """One SpaRSA iteration.

    ``alpha`` is a curvature estimate, the step is ``1/alpha``. The first
    iteration uses ``alpha = L``, later ones the Barzilai-Borwein value. The
    candidate ``prox(x - grad/alpha)`` is accepted against the Zhang-Hager
    reference value; otherwise ``alpha`` is doubled. After ``max_backtracks``
    failures a plain ``1/L`` step is taken.
    """
    prox = problem.prox
    alpha = state.alpha if state.x_prev is None else _bb_curvature(state, opts)
    for n_bt in range(opts.max_backtracks + 1):
        x_new = prox.prox(state.x - state.grad / alpha, alpha)
        dx = x_new - state.x
        f_new = problem.value(x_new)
        psi_new = f_new + prox.value(x_new)
        if psi_new <= state.ref_value - opts.sigma * 0.5 * alpha * float(np.dot(dx, dx)):
            break
        alpha = min(alpha * opts.growth, opts.alpha_max)
    else:
        alpha = L
        x_new = prox.prox(state.x - state.grad / L, L)
        f_new = problem.value(x_new)
        psi_new = f_new + prox.value(x_new)
    _, g_new = problem.value_grad(x_new)
    weight = opts.eta_zh * state.ref_weight + 1.0
    ref = (opts.eta_zh * state.ref_weight * state.ref_value + psi_new) / weight
    return SparsaState(x=x_new, f=f_new, grad=np.asarray(g_new, dtype=float), psi=psi_new,
                       alpha=alpha, ref_value=ref, ref_weight=weight, x_prev=state.x,
                       grad_prev=state.grad, k=state.k + 1,
                       n_backtracks=state.n_backtracks + n_bt)


def _lipschitz(problem):
    L = problem.lipschitz if problem.lipschitz is not None else problem.initial_lipschitz
    if L is None or L <= 0:
        raise ValueError("problem provides no Lipschitz estimate")
    return L


def _record(k, t0, x, psi, nat, L):
    return dict(k=k, wall_seconds=time.perf_counter() - t0, psi=psi, f_nor_norm=math.nan,
                f_nat_norm=nat, chi=math.nan, delta=math.nan, rho=math.nan, accepted=True,
                cg_iters=0, cg_status="", L_current=L, nu_k=math.nan)


def _run(problem, step, state, get_x, get_grad, L, tol, max_iter, time_budget, callback):
    t0 = time.perf_counter()
    lam = problem.default_lambda(L)
    trace = []
    status = None
    while True:
        x = get_x(state)
        g = get_grad(state)
        nat = float(np.linalg.norm(natural_residual(x, g, problem.prox, lam)))
        trace.append(_record(state.k, t0, x, problem.psi(x), nat, L))
        if callback is not None:
            callback(trace[-1])
        if math.sqrt(lam) * nat <= tol:
            status = "natural_residual"
        elif state.k >= max_iter:
            status = "max_iter"
        elif time_budget is not None and time.perf_counter() - t0 > time_budget:
            status = "time_budget"
        if status is not None:
            break
        state = step(state)
    return SolveResult(x=get_x(state), z=None, converged=status == "natural_residual",
                       status=status, n_iter=state.k, state=state, trace=trace)


def fista(problem, x0=None, tol=1e-10, max_iter=1000, time_budget=None, callback=None):
    """Run FISTA with the problem's fixed Lipschitz constant."""
    if problem.lipschitz is None:
        raise ValueError("FISTA needs a known Lipschitz constant")
    L = problem.lipschitz
    x0 = problem.default_x0() if x0 is None else np.asarray(x0, dtype=float).copy()
    state = FistaState(x=x0, y=x0.copy(), t=1.0, L=L)
    return _run(problem, lambda s: fista_step(s, problem), state, lambda s: s.x,
                lambda s: problem.gradient(s.x), L, tol, max_iter, time_budget, callback)


def sparsa(problem, x0=None, tol=1e-10, max_iter=1000, time_budget=None, callback=None):
    """Run SpaRSA with Barzilai-Borwein steps and a nonmonotone line search."""
    L = _lipschitz(problem)
    x0 = problem.default_x0() if x0 is None else np.asarray(x0, dtype=float).copy()
    state = sparsa_init(problem, x0, L)
    return _run(problem, lambda s: sparsa_step(s, problem, L), state, lambda s: s.x,
                lambda s: s.grad, L, tol, max_iter, time_budget, callback)
