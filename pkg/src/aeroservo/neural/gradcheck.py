"""Central-difference checks of the analytic loss gradients."""

from __future__ import annotations

import numpy as np

from ..geometry import Pose, rotvec_exp
from ..matching import MatchSet
from . import losses


def numeric_gradient(f, x, h: float = 1e-6) -> np.ndarray:
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def relative_error(analytic, numeric) -> float:
    """``max|a - n| / max(max|a|, max|n|)``; zero when both vanish."""
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)))
    return 0.0 if scale == 0 else float(np.max(np.abs(a - n)) / scale)


def _random_rotation(rng, max_angle=np.pi):
    v = rng.normal(size=3)
    return rotvec_exp(v / np.linalg.norm(v) * rng.uniform(0.05, max_angle))


def check_loss_gradients(seed: int = 0, n: int = 8, h: float = 1e-6) -> dict:
    """Relative error per gradient on one random problem."""
    rng = np.random.default_rng(seed)
    prior = rng.normal(size=(2 * n, 3))
    kp = rng.normal(size=(n, 3))
    gt = Pose(_random_rotation(rng), rng.normal(size=3))
    k_prev = rng.normal(size=(n, 3))
    k_curr = k_prev @ gt.r.T + gt.t + 0.1 * rng.normal(size=(n, 3))
    p_c = rng.uniform(0.05, 1.0, size=(n, n))
    gt_m = MatchSet(np.column_stack([np.arange(n), rng.permutation(n)]), np.ones(n))
    delta_r = _random_rotation(rng, 0.3) @ gt.r

    out = {}
    out["aux/keypoints"] = relative_error(losses.loss_aux_grad(prior, kp),
                                          numeric_gradient(lambda x: losses.loss_aux(prior, x), kp, h))
    g_prev, g_curr = losses.loss_mvc_grad(k_prev, k_curr, gt)
    out["mvc/k_curr"] = relative_error(g_curr, numeric_gradient(lambda x: losses.loss_mvc(k_prev, x, gt), k_curr, h))
    out["mvc/k_prev"] = relative_error(g_prev, numeric_gradient(lambda x: losses.loss_mvc(x, k_curr, gt), k_prev, h))
    out["match/p_c"] = relative_error(losses.loss_matching_grad(p_c, gt_m),
                                      numeric_gradient(lambda x: losses.loss_matching(x, gt_m), p_c, h))
    g_tra, g_rot = losses.loss_pose_grad(k_prev, k_curr, delta_r, gt)
    out["tra/k_curr"] = relative_error(
        g_tra, numeric_gradient(lambda x: losses.loss_pose(k_prev, x, delta_r, gt)[0], k_curr, h))
    out["rot/delta_r"] = relative_error(
        g_rot, numeric_gradient(lambda x: losses.loss_pose(k_prev, k_curr, x, gt)[1], delta_r, h))
    return out
