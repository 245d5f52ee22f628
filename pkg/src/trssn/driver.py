"""Trust-region normal-map semismooth Newton method.

The iteration works on ``z`` with ``x = prox(z)``. Each outer step builds the
0/1 derivative ``D`` of the prox, solves the reduced Newton system
``D^T M q = -D^T F_nor(z)`` with ``M = B D + lam (I - D)`` by Steihaug-CG,
lifts and rescales the result, and accepts the trial point through a ratio
test on the merit function ``H(z) = psi(prox z) + tau/2 ||F_nor(z)||^2 / lam``.
"""

from dataclasses import dataclass, field, replace
import math
import time

import numpy as np

from ._validation import check_in_interval, check_int, check_positive
from .cg import lift_step, rescale_to_radius, steihaug_cg
from .hessian import CompactLBFGS, ExactHessian, SkipPolicy
from .prox import initial_z, residuals_from


class StagnationError(RuntimeError):
    """Too many consecutive rejected trial steps."""


class NumericalBreakdown(FloatingPointError):
    """A NaN/inf showed up in the objective or the residuals."""


@dataclass
class TrssnParams:
    """Parameters of the solver.

    The defaults are the radius/acceptance constants ``delta_min=1e-2``,
    ``gamma_shrink=0.25``, ``gamma_expand=2``, ``eta1=1e-6``, ``eta2=0.75`` and
    the ``nu_k`` schedule ``min(nu, c_a n_S^(2 alpha) ||dx||_Lambda^(2 p))`` with
    ``c_a=1e-3``, ``alpha=0.2``, ``p=0.1``.
    """

    delta0: float = 1.0
    delta_min: float = 1e-2
    delta_max: float = 1e10
    gamma_shrink: float = 0.25
    gamma_expand: float = 2.0
    eta1: float = 1e-6
    eta2: float = 0.75
    c_tau: float = 0.05
    c_nu: float = 0.05
    c_a: float = 1e-3
    alpha: float = 0.2
    p: float = 0.1
    tol: float = 1e-10
    max_iter: int = 1000
    cg_max_iter: int = 10
    hessian: str = "lbfgs"
    memory: int = 10
    xi: float = 1e-8
    max_rejections: int = 100
    time_budget: float = None
    check_sentinel: bool = False

    def __post_init__(self):
        check_positive(self.delta0, "delta0")
        check_positive(self.delta_min, "delta_min", strict=False)
        if not self.delta_max >= max(self.delta0, self.delta_min):
            raise ValueError("delta_max must be at least delta0 and delta_min")
        check_in_interval(self.gamma_shrink, "gamma_shrink", 0.0, 1.0)
        if self.gamma_expand <= 1.0:
            raise ValueError(f"gamma_expand must be > 1, got {self.gamma_expand}")
        check_in_interval(self.eta1, "eta1", 0.0, 1.0)
        check_in_interval(self.eta2, "eta2", self.eta1, 1.0, closed="left")
        check_in_interval(self.c_tau, "c_tau", 0.0, 1.0)
        check_in_interval(self.c_nu, "c_nu", 0.0, 1.0, closed="left")
        check_positive(self.c_a, "c_a", strict=False)
        check_in_interval(self.p, "p", 0.0, 1.0)
        check_positive(self.alpha, "alpha", strict=False)
        check_positive(self.tol, "tol", strict=False)
        check_int(self.max_iter, "max_iter")
        check_int(self.cg_max_iter, "cg_max_iter", minimum=1)
        check_int(self.memory, "memory", minimum=1)
        check_positive(self.xi, "xi")
        if self.hessian not in ("lbfgs", "exact"):
            raise ValueError(f"hessian must be 'lbfgs' or 'exact', got {self.hessian!r}")


def derive_tau_nu(L, lam, c_tau=0.05, c_nu=0.05):
    """Merit weight ``tau`` and cap ``nu`` from the Lipschitz estimate and ``lam``.

    ``tau = c_tau 2 lam^2 / (L^2 + 2 lam^2)`` and
    ``nu = 1/2 min(tau, c_nu (1 - tau/2 (L^2 / (2 lam^2) + 1)))``. The pair is
    checked against ``tau (L^2 + 2 lam^2) < 2 lam^2 (1 - nu)``.
    """
    L = check_positive(L, "L")
    lam = check_positive(lam, "lam")
    tau = c_tau * 2.0 * lam**2 / (L**2 + 2.0 * lam**2)
    nu = 0.5 * min(tau, c_nu * (1.0 - 0.5 * tau * (L**2 / (2.0 * lam**2) + 1.0)))
    if not (0.0 <= nu < 1.0 and tau * (L**2 + 2.0 * lam**2) < 2.0 * lam**2 * (1.0 - nu)):
        raise ValueError(f"tau={tau}, nu={nu} violate the merit condition for L={L}, lam={lam}")
    return tau, nu


def merit_value(psi, f_nor_norm, tau, lam):
    return psi + 0.5 * tau * f_nor_norm**2 / lam


def predicted_reduction(tau, chi, delta, nu_k, dx_lambda_sq):
    """``tau/2 chi min(1, delta, chi) + nu_k chi / min(delta, chi) ||dx||_Lambda^2``."""
    if not chi > 0.0:
        raise ValueError("predicted reduction requested at a critical point (chi = 0)")
    return (0.5 * tau * chi * min(1.0, delta, chi)
            + nu_k * chi / min(delta, chi) * dx_lambda_sq)


def nu_schedule(n_success, dx_lambda_norm, nu_cap, c_a=1e-3, alpha=0.2, p=0.1):
    """``min(nu, c_a max(1, n_S)^(2 alpha) ||dx||_Lambda^(2 p))``."""
    if dx_lambda_norm == 0.0:
        return 0.0
    return min(nu_cap, c_a * max(1, n_success) ** (2.0 * alpha) * dx_lambda_norm ** (2.0 * p))


def eps_schedule(f_nor_norm):
    """CG tolerance ``min(||F_nor||^2.5, 0.01)``."""
    return min(f_nor_norm**2.5, 0.01)


def trust_region_update(delta, rho, params):
    if rho < params.eta1:
        return params.gamma_shrink * delta
    if rho < params.eta2:
        return max(delta, params.delta_min)
    # capped so that repeated expansion cannot overflow and block later shrinking
    return min(max(params.gamma_expand * delta, params.delta_min), params.delta_max)


def adaptive_lipschitz(L_prev, f_new, f_old, grad_old, dx):
    """Raise the Lipschitz estimate when the quadratic upper bound fails along ``dx``.

    Returns ``L_prev`` if ``f_new <= f_old + <grad_old, dx> + L_prev/2 ||dx||^2``
    and ``max(2 gap / ||dx||^2, 2 L_prev)`` otherwise.
    """
    dd = float(np.dot(dx, dx))
    if dd == 0.0:
        raise ValueError("adaptive_lipschitz needs a nonzero step")
    gap = f_new - f_old - float(np.dot(grad_old, dx))
    slack = 16 * np.finfo(float).eps * max(1.0, abs(f_old))
    if gap <= 0.5 * L_prev * dd + slack:
        return L_prev
    return max(2.0 * gap / dd, 2.0 * L_prev)


@dataclass
class SolverState:
    z: np.ndarray
    x: np.ndarray
    f: float
    grad: np.ndarray
    phi: float
    residuals: object
    delta: float
    L: float
    lam: float
    tau: float
    nu: float
    model: object
    k: int = 0
    n_success: int = 0

    @property
    def psi(self):
        return self.f + self.phi

    @property
    def chi(self):
        return self.residuals.chi


def merit(state):
    """``H_tau(z) = psi(prox z) + tau/2 ||F_nor(z)||^2 / lam`` at the state's ``z``."""
    return merit_value(state.psi, state.residuals.nor_norm, state.tau, state.lam)


@dataclass
class StepReport:
    rho: float
    pred: float
    ared: float
    accepted: bool
    cg_status: str
    cg_iters: int
    step_norm: float
    nu_k: float
    merit_before: float
    merit_after: float
    rho_full: float = math.nan
    lipschitz_refresh: bool = False


def _evaluate(problem, z, lam):
    x = problem.prox.prox(z, lam)
    f, g = problem.value_grad(x)
    return x, f, np.asarray(g, dtype=float), problem.prox.value(x)


def _reparametrize(problem, state, L_new, params):
    """Switch to a new Lipschitz estimate: new ``lam``, ``tau``, ``nu`` and a ``z`` with the same ``x``."""
    lam = problem.default_lambda(L_new)
    tau, nu = derive_tau_nu(L_new, lam, params.c_tau, params.c_nu)
    z = initial_z(state.x, state.grad, problem.prox, lam)
    x, f, g, phi = _evaluate(problem, z, lam)
    res = residuals_from(z, x, g, problem.prox, lam)
    return replace(state, z=z, x=x, f=f, grad=g, phi=phi, residuals=res,
                   L=L_new, lam=lam, tau=tau, nu=nu)


def trssn_step(problem, state, params):
    """Run one outer iteration and return ``(new_state, report)``.

    A rejected step returns a state that shares ``z``, ``x`` and the model with
    the input; only ``delta`` and ``k`` change.
    """
    if not state.chi > params.tol:
        raise ValueError("trssn_step called at a point that already meets the tolerance")
    prox = problem.prox
    lam, z, x, model = state.lam, state.z, state.x, state.model
    f_nor = state.residuals.f_nor
    n = z.size

    d = prox.gderiv(z, lam)
    free = np.flatnonzero(d)

    def apply_S(q_free):
        v = np.zeros(n)
        v[free] = q_free
        return model.matvec(v)[free]

    def apply_M(v):
        return model.matvec(d * v) + lam * (1.0 - d) * v

    f_nor_norm = state.residuals.nor_norm
    cg = steihaug_cg(apply_S, f_nor[free], state.delta, eps_schedule(f_nor_norm),
                     max_iter=params.cg_max_iter)
    q = np.zeros(n)
    q[free] = cg.q
    s = rescale_to_radius(lift_step(q, f_nor, apply_M, lam), state.delta, lam)

    z_trial = z + s
    x_trial = prox.prox(z_trial, lam)
    f_trial = problem.value(x_trial)
    phi_trial = prox.value(x_trial)
    if math.isnan(f_trial + phi_trial):
        raise NumericalBreakdown(f"objective is NaN at trial point (iteration {state.k})")
    dx = x_trial - x
    H = merit(state)
    report = dict(cg_status=cg.status, cg_iters=cg.n_iter,
                  step_norm=float(np.linalg.norm(s)), merit_before=H)

    if problem.lipschitz is None and np.any(dx != 0):
        L_new = adaptive_lipschitz(state.L, f_trial, state.f, state.grad, dx)
        if L_new != state.L:
            new = _reparametrize(problem, state, L_new, params)
            new.k = state.k + 1
            return new, StepReport(rho=math.nan, pred=math.nan, ared=math.nan, accepted=False,
                                   nu_k=math.nan, merit_after=merit(new),
                                   lipschitz_refresh=True, **report)

    dx_lam_sq = lam * float(np.dot(dx, dx))
    nu_k = nu_schedule(state.n_success, math.sqrt(dx_lam_sq), state.nu,
                       params.c_a, params.alpha, params.p)
    pred = predicted_reduction(state.tau, state.chi, state.delta, nu_k, dx_lam_sq)

    # psi(x) - psi(x_trial) and H(z) - psi(x_trial), formed from differences so
    # that they stay accurate when both are far below the size of psi
    psi_drop = (problem.f_decrease(x, x_trial, state.f, f_trial)
                + prox.value_decrease(x, x_trial))
    merit_gap = psi_drop + 0.5 * state.tau * f_nor_norm**2 / lam

    def full_ratio():
        _, g_t = problem.value_grad(x_trial)
        g_t = np.asarray(g_t, dtype=float)
        res_t = residuals_from(z_trial, x_trial, g_t, prox, lam)
        ared = merit_gap - 0.5 * state.tau * res_t.nor_norm**2 / lam
        return g_t, res_t, ared

    rho_full = math.nan
    if not merit_gap > 0.0:
        # psi(x_trial) >= H(z): the step cannot be accepted, skip the trial gradient
        rho, ared = -1.0, math.nan
        if params.check_sentinel:
            rho_full = full_ratio()[2] / pred
        accepted = False
    else:
        g_t, res_t, ared = full_ratio()
        if not (math.isfinite(ared) and np.all(np.isfinite(res_t.f_nor))):
            raise NumericalBreakdown(f"non-finite residual at trial point (iteration {state.k})")
        rho = ared / pred
        accepted = rho >= params.eta1

    delta_new = trust_region_update(state.delta, rho, params)
    if accepted:
        model.update(dx, g_t - state.grad, state.k, x=x_trial)
        new = replace(state, z=z_trial, x=x_trial, f=f_trial, grad=g_t,
                      phi=phi_trial, residuals=res_t, delta=delta_new,
                      k=state.k + 1, n_success=state.n_success + 1)
        H_after = merit(new)
    else:
        new = replace(state, delta=delta_new, k=state.k + 1)
        H_after = H
    return new, StepReport(rho=rho, pred=pred, ared=ared, accepted=accepted, nu_k=nu_k,
                           merit_after=H_after, rho_full=rho_full, **report)


@dataclass
class SolveResult:
    x: np.ndarray
    z: np.ndarray
    converged: bool
    status: str
    n_iter: int
    state: SolverState
    trace: list = field(default_factory=list)


def initial_state(problem, params, x0=None):
    """Lift ``x0`` to the normal-map space and set up ``lam``, ``tau``, ``nu`` and the model."""
    x0 = problem.default_x0() if x0 is None else np.asarray(x0, dtype=float).copy()
    if not math.isfinite(problem.prox.value(x0)):
        raise ValueError("x0 is outside the domain of the nonsmooth term")
    L = problem.lipschitz if problem.lipschitz is not None else problem.initial_lipschitz
    if L is None or L <= 0:
        raise ValueError("problem provides neither a Lipschitz constant nor an initial estimate")
    lam = problem.default_lambda(L)
    tau, nu = derive_tau_nu(L, lam, params.c_tau, params.c_nu)
    _, g0 = problem.value_grad(x0)
    z = initial_z(x0, g0, problem.prox, lam)
    x, f, g, phi = _evaluate(problem, z, lam)
    if params.hessian == "exact":
        model = ExactHessian(problem, x)
    else:
        model = CompactLBFGS(z.size, memory=params.memory, skip=SkipPolicy(params.xi))
    res = residuals_from(z, x, g, problem.prox, lam)
    return SolverState(z=z, x=x, f=f, grad=g, phi=phi, residuals=res, delta=params.delta0,
                       L=L, lam=lam, tau=tau, nu=nu, model=model)


def _record(state, report, t0):
    rec = dict(k=state.k, wall_seconds=time.perf_counter() - t0, psi=state.psi,
               f_nor_norm=state.residuals.nor_norm,
               f_nat_norm=state.residuals.nat_norm, chi=state.chi, delta=state.delta,
               L_current=state.L, lam=state.lam, merit=merit(state))
    if report is None:
        rec.update(rho=math.nan, accepted=False, cg_iters=0, cg_status="", nu_k=math.nan,
                   ared=math.nan, pred=math.nan, merit_before=math.nan, rho_full=math.nan,
                   lipschitz_refresh=False)
    else:
        rec.update(rho=report.rho, accepted=report.accepted, cg_iters=report.cg_iters,
                   cg_status=report.cg_status, nu_k=report.nu_k, ared=report.ared,
                   pred=report.pred, merit_before=report.merit_before,
                   rho_full=report.rho_full, lipschitz_refresh=report.lipschitz_refresh)
    return rec


def solve(problem, params=None, x0=None, callback=None):
    """Minimize ``f + phi`` for a built-in problem.

    Parameters
    ----------
    problem : CompositeProblem
    params : TrssnParams, optional
    x0 : ndarray, optional
        Starting point in the domain of ``phi``; defaults to ``problem.default_x0()``.
    callback : callable, optional
        Called with each trace record (a dict) right after it is produced.

    Returns
    -------
    SolveResult
        ``status`` is ``'chi'`` or ``'natural_residual'`` on convergence,
        ``'max_iter'`` or ``'time_budget'`` otherwise.
    """
    params = TrssnParams() if params is None else params
    t0 = time.perf_counter()
    state = initial_state(problem, params, x0)
    trace = [_record(state, None, t0)]
    if callback is not None:
        callback(trace[-1])

    rejections = 0
    status = None
    while True:
        if state.chi <= params.tol:
            status = "chi"
            break
        if state.k >= params.max_iter:
            status = "max_iter"
            break
        if params.time_budget is not None and time.perf_counter() - t0 > params.time_budget:
            status = "time_budget"
            break
        state, report = trssn_step(problem, state, params)
        if report.accepted or report.lipschitz_refresh:
            rejections = 0
        else:
            rejections += 1
            if rejections > params.max_rejections:
                raise StagnationError(f"{rejections} consecutive rejected steps at iteration "
                                      f"{state.k} (delta={state.delta:.3e}, chi={state.chi:.3e})")
        if report.accepted and math.sqrt(state.lam) * state.residuals.nat_norm <= params.tol:
            state, status = _finish_natural(problem, state, params)
        trace.append(_record(state, report, t0))
        if callback is not None:
            callback(trace[-1])
        if status is not None:
            break

    converged = status in ("chi", "natural_residual")
    return SolveResult(x=state.x, z=state.z, converged=converged, status=status,
                       n_iter=state.k, state=state, trace=trace)


def _finish_natural(problem, state, params):
    """The natural residual vanished: try the canonical ``z = x - grad f(x) / lam``."""
    z_bar = state.x - state.grad / state.lam
    x, f, g, phi = _evaluate(problem, z_bar, state.lam)
    res = residuals_from(z_bar, x, g, problem.prox, state.lam)
    cand = replace(state, z=z_bar, x=x, f=f, grad=g, phi=phi, residuals=res)
    if res.chi <= params.tol and merit(cand) <= merit(state):
        return cand, "chi"
    return state, "natural_residual"
