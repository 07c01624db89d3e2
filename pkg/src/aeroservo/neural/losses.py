"""Training losses over keypoints and rotations, with analytic gradients."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial.distance import cdist

from ..geometry import Pose
from ..matching import MatchSet

MATCH_EPS = 1e-12


class NumericalGuardWarning(RuntimeWarning):
    """An input was clamped to keep a loss or lookup defined."""


def _points(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1, 3)
    if len(a) == 0:
        raise ValueError(f"{name} is empty")
    return a


def loss_aux(prior, keypoints) -> float:
    """Symmetric Chamfer distance with squared Euclidean terms."""
    p, k = _points(prior, "prior"), _points(keypoints, "keypoints")
    d2 = cdist(p, k, "sqeuclidean")
    return float(d2.min(axis=1).sum() + d2.min(axis=0).sum())


def loss_aux_grad(prior, keypoints) -> np.ndarray:
    """Gradient of :func:`loss_aux` with respect to the keypoints."""
    p, k = _points(prior, "prior"), _points(keypoints, "keypoints")
    d2 = cdist(p, k, "sqeuclidean")
    g = np.zeros_like(k)
    near_k = d2.argmin(axis=1)  # for each prior point
    np.add.at(g, near_k, 2.0 * (k[near_k] - p))
    near_p = d2.argmin(axis=0)  # for each keypoint
    g += 2.0 * (k - p[near_p])
    return g


def _mvc_residual(k_prev, k_curr, gt_delta: Pose):
    kp, kc = _points(k_prev, "k_prev"), _points(k_curr, "k_curr")
    if kp.shape != kc.shape:
        raise ValueError("k_prev and k_curr must be row-aligned")
    return kc - (kp @ gt_delta.r.T + gt_delta.t)


def loss_mvc(k_prev, k_curr, gt_delta: Pose) -> float:
    """Mean distance between current keypoints and the ground-truth-moved previous ones."""
    r = _mvc_residual(k_prev, k_curr, gt_delta)
    return float(np.mean(np.linalg.norm(r, axis=1)))


def loss_mvc_grad(k_prev, k_curr, gt_delta: Pose):
    """Gradients ``(d/dk_prev, d/dk_curr)``; rows with zero residual get zero."""
    r = _mvc_residual(k_prev, k_curr, gt_delta)
    norm = np.linalg.norm(r, axis=1, keepdims=True)
    unit = np.divide(r, norm, out=np.zeros_like(r), where=norm > 0) / len(r)
    return -unit @ gt_delta.r, unit


def _match_cells(p_c, gt: MatchSet):
    p = np.asarray(p_c, dtype=float)
    if len(gt) == 0:
        raise ValueError("ground-truth match set is empty")
    i, j = gt.pairs[:, 0], gt.pairs[:, 1]
    return p, i, j


def loss_matching(p_c, gt_matches: MatchSet) -> float:
    """Mean negative log confidence over the ground-truth cells."""
    p, i, j = _match_cells(p_c, gt_matches)
    cells = p[i, j]
    if np.any(cells < MATCH_EPS):
        warnings.warn(f"{int(np.sum(cells < MATCH_EPS))} ground-truth cell(s) clamped to {MATCH_EPS}",
                      NumericalGuardWarning, stacklevel=2)
        cells = np.maximum(cells, MATCH_EPS)
    return float(-np.mean(np.log(cells)))


def loss_matching_grad(p_c, gt_matches: MatchSet) -> np.ndarray:
    p, i, j = _match_cells(p_c, gt_matches)
    g = np.zeros_like(p)
    cells = np.maximum(p[i, j], MATCH_EPS)
    np.add.at(g, (i, j), -1.0 / (len(i) * cells))
    return g


def _rot_ratio(delta_r, gt_r):
    diff = np.asarray(delta_r, dtype=float) - np.asarray(gt_r, dtype=float)
    fro = float(np.linalg.norm(diff))
    return diff, fro, fro / (2.0 * np.sqrt(2.0))


def loss_pose(k_prev, k_curr, delta_r, gt_delta: Pose) -> tuple[float, float]:
    """``(translation loss, rotation loss)``.

    The rotation term is the geodesic angle recovered from the chordal
    distance; an arcsine argument above one is clamped.
    """
    kp, kc = _points(k_prev, "k_prev"), _points(k_curr, "k_curr")
    if kp.shape != kc.shape:
        raise ValueError("k_prev and k_curr must be row-aligned")
    l_tra = float(np.linalg.norm(np.mean(kc - kp, axis=0) - gt_delta.t))
    _, _, s = _rot_ratio(delta_r, gt_delta.r)
    if s > 1.0:
        warnings.warn(f"arcsine argument {s:.6g} clamped to 1", NumericalGuardWarning, stacklevel=2)
        s = 1.0
    return l_tra, float(2.0 * np.arcsin(s))


def loss_pose_grad(k_prev, k_curr, delta_r, gt_delta: Pose):
    """Gradients ``(d L_tra / d k_curr, d L_rot / d delta_r)``."""
    kp, kc = _points(k_prev, "k_prev"), _points(k_curr, "k_curr")
    e = np.mean(kc - kp, axis=0) - gt_delta.t
    ne = np.linalg.norm(e)
    g_tra = np.tile(e / ne / len(kc) if ne > 0 else np.zeros(3), (len(kc), 1))
    diff, fro, s = _rot_ratio(delta_r, gt_delta.r)
    if fro == 0 or s >= 1.0:
        g_rot = np.zeros((3, 3))
    else:
        g_rot = diff / (np.sqrt(2.0) * fro * np.sqrt(1.0 - s * s))
    return g_tra, g_rot


def total_loss(terms: dict, params=None) -> float:
    """Weighted sum of named loss terms (``aux``, ``mvc``, ``match``, ``tra``, ``rot``)."""
    weights = {"aux": 1.0, "mvc": 1.0, "match": 1.0, "tra": 1.0, "rot": 1.0}
    if params is not None:
        weights = {k: getattr(params, f"weight_{k}") for k in weights}
    unknown = set(terms) - set(weights)
    if unknown:
        raise ValueError(f"unknown loss terms: {sorted(unknown)}")
    return float(sum(weights[k] * float(v) for k, v in terms.items()))
