"""Steihaug-CG on the reduced Newton system and the lifting back to a full step."""

from dataclasses import dataclass
import math

import numpy as np

TOLERANCE_MET = "tolerance_met"
BOUNDARY_HIT = "boundary_hit"
NEGATIVE_CURVATURE = "negative_curvature"
EARLY_EXIT = "early_exit_small_g"
MAX_ITERS = "max_iters"


@dataclass
class CGResult:
    q: np.ndarray
    status: str
    n_iter: int
    residual_norm: float


def _boundary_roots(q, p, delta):
    """Both roots ``alpha`` of ``||q + alpha p|| = delta``, smaller first."""
    pp = float(np.dot(p, p))
    qp = float(np.dot(q, p))
    qq = float(np.dot(q, q))
    disc = math.sqrt(max(qp * qp + pp * (delta * delta - qq), 0.0))
    # cancellation-free pair of roots
    if qp >= 0:
        a_hi = (delta * delta - qq) / (qp + disc) if qp + disc > 0 else 0.0
        a_lo = -(qp + disc) / pp
    else:
        a_lo = (delta * delta - qq) / (qp - disc) if qp - disc < 0 else 0.0
        a_hi = (-qp + disc) / pp
    return a_lo, a_hi


def steihaug_cg(apply_S, g, delta, eps, max_iter=10):
    """Approximately minimize ``<g, q> + 1/2 <q, S q>`` subject to ``||q|| <= delta``.

    Parameters
    ----------
    apply_S : callable
        ``q -> S q`` for a symmetric operator ``S``.
    g : ndarray
        Linear term.
    delta : float
        Trust-region radius, ``delta > 0``.
    eps : float
        Stop once the residual ``||g + S q||`` drops below ``eps``.
    max_iter : int or None, default=10
        Iteration cap. ``None`` runs up to ``len(g)`` iterations.

    Returns
    -------
    CGResult
        ``q`` always satisfies ``||q|| <= delta``. ``status`` is one of
        ``tolerance_met``, ``boundary_hit``, ``negative_curvature``,
        ``early_exit_small_g`` and ``max_iters``.
    """
    g = np.asarray(g, dtype=float)
    n = g.size
    cap = n if max_iter is None else min(int(max_iter), n)
    q = np.zeros_like(g)
    r = g.copy()
    rr = float(np.dot(r, r))
    if math.sqrt(rr) < eps or rr == 0.0:
        return CGResult(q, EARLY_EXIT, 0, math.sqrt(rr))
    p = -r
    for i in range(cap):
        Sp = apply_S(p)
        pSp = float(np.dot(p, Sp))
        if pSp <= 0.0:
            # pick the boundary point with the lower model value; S q = r - g
            Sq = r - g
            best = None
            for alpha in _boundary_roots(q, p, delta):
                cand = q + alpha * p
                val = (float(np.dot(g, cand)) + 0.5 * float(np.dot(q, Sq))
                       + alpha * float(np.dot(p, Sq)) + 0.5 * alpha * alpha * pSp)
                if best is None or val < best[0]:
                    best = (val, cand)
            return CGResult(best[1], NEGATIVE_CURVATURE, i + 1, math.sqrt(rr))
        alpha = rr / pSp
        q_next = q + alpha * p
        if np.linalg.norm(q_next) >= delta:
            alpha = _boundary_roots(q, p, delta)[1]
            return CGResult(q + alpha * p, BOUNDARY_HIT, i + 1, math.sqrt(rr))
        q = q_next
        r = r + alpha * Sp
        rr_next = float(np.dot(r, r))
        if math.sqrt(rr_next) < eps or rr_next == 0.0:
            return CGResult(q, TOLERANCE_MET, i + 1, math.sqrt(rr_next))
        beta = rr_next / rr
        rr = rr_next
        p = -r + beta * p
    return CGResult(q, MAX_ITERS, cap, math.sqrt(rr))


def lift_step(q_bar, f_nor, apply_M, lam):
    """Lift a reduced solution: ``s = q - (F_nor + M q) / lam``.

    If ``||D^T (M q + F_nor)|| <= eps`` then ``||M s + F_nor|| <= ||I - B/lam|| eps``.
    """
    return q_bar - (f_nor + apply_M(q_bar)) / lam


def rescale_to_radius(s_bar, delta, lam):
    """Scale ``s_bar`` by ``min(1, delta / ||s_bar||_Lambda)``."""
    norm = math.sqrt(lam) * float(np.linalg.norm(s_bar))
    if norm == 0.0 or norm <= delta:
        return s_bar
    return (delta / norm) * s_bar
