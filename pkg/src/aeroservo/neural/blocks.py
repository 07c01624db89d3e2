"""Forward passes of the fusion, temporal and shape-prior attention blocks.

All blocks take row-per-point feature matrices (N, d) and are pure functions
of their inputs and a :class:`BlockWeights`. Nothing here is trained.
"""

from __future__ import annotations

import numpy as np
from scipy.special import softmax

from .weights import BlockWeights


class ShapeMismatchError(ValueError):
    """Feature matrices with incompatible shapes."""


def _features(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ShapeMismatchError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ShapeMismatchError(f"{name} has non-finite entries")
    return a


def _same_rows(*named):
    rows = {name: a.shape[0] for name, a in named}
    if len(set(rows.values())) != 1:
        raise ShapeMismatchError(f"row counts differ: {rows}")


def _width(a, d: int, name: str):
    if a.shape[1] != d:
        raise ShapeMismatchError(f"{name} has {a.shape[1]} columns, weights expect {d}")


def relu(x):
    return np.maximum(x, 0.0)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def multi_head(q_in, k_in, v_in, w: BlockWeights, prefix: str) -> np.ndarray:
    """Scaled dot-product attention over ``h`` heads plus output map."""
    h = w.h
    q, k, v = q_in @ w[prefix + ".q"], k_in @ w[prefix + ".k"], v_in @ w[prefix + ".v"]
    dh = q.shape[1] // h
    heads = []
    for i in range(h):
        s = slice(i * dh, (i + 1) * dh)
        a = softmax(q[:, s] @ k[:, s].T / np.sqrt(dh), axis=1)
        heads.append(a @ v[:, s])
    return np.hstack(heads) @ w[prefix + ".o"]


def wsa_forward(img_feat, pt_feat, w: BlockWeights):
    """Cross-modal offset attention; returns ``(F_c, F_g)``.

    The image branch attends from image queries to point keys and subtracts
    its own query projection; the point branch swaps the roles.
    """
    i = _features(img_feat, "img_feat")
    p = _features(pt_feat, "pt_feat")
    _same_rows(("img_feat", i), ("pt_feat", p))
    d = w.params.d
    _width(i, d, "img_feat")
    _width(p, d, "pt_feat")

    def branch(a, b):
        q = a @ w["wsa.q"]
        att = softmax(q @ (b @ w["wsa.k"]).T, axis=1)
        return relu((att @ (a @ w["wsa.v"]) - q) @ w["wsa.phi_w"] + w["wsa.phi_b"])

    return branch(i, p), branch(p, i)


def context_projection(f_c, w: BlockWeights, key: str = "fuse.proj") -> np.ndarray:
    """(N, k) projection derived from the color features, columns softmaxed over N."""
    return softmax(f_c @ w[key], axis=0)


def lowrank_attention(q, k, v, h: int, proj_k, proj_v, scale: float, block: int = 256) -> np.ndarray:
    """Multi-head attention with keys and values compressed to ``k`` rows.

    ``proj_k`` and ``proj_v`` are (N, k); the per-head context matrix is
    (N, k), so cost grows linearly in N. Query rows are processed in blocks
    so the working set stays cache-sized.
    """
    n, width = q.shape
    dh = width // h
    kc = proj_k.T @ k
    vc = proj_v.T @ v
    r = kc.shape[0]
    k_heads = kc.reshape(r, h, dh).transpose(1, 2, 0)  # (h, dh, k)
    v_heads = vc.reshape(r, h, dh).transpose(1, 0, 2)  # (h, k, dh)
    out = np.empty((n, width))
    for a in range(0, n, block):
        q_heads = q[a:a + block].reshape(-1, h, dh).transpose(1, 0, 2)
        s = np.matmul(q_heads, k_heads)
        s /= scale
        s -= s.max(axis=2, keepdims=True)
        np.exp(s, out=s)
        s /= s.sum(axis=2, keepdims=True)
        out[a:a + block] = np.matmul(s, v_heads).transpose(1, 0, 2).reshape(-1, width)
    return out


def lowrank_fusion(f_c, f_g, w: BlockWeights, proj_k=None, proj_v=None) -> np.ndarray:
    """Fuse color and geometry features with low-rank multi-head attention.

    Queries, keys and values come from an MLP of ``f_g``; the key and value
    compressions come from ``f_c`` unless given explicitly.
    """
    f_c = _features(f_c, "f_c")
    f_g = _features(f_g, "f_g")
    _same_rows(("f_c", f_c), ("f_g", f_g))
    d = w.params.d
    _width(f_c, d, "f_c")
    _width(f_g, d, "f_g")
    if proj_k is None or proj_v is None:
        proj = context_projection(f_c, w)
        proj_k = proj if proj_k is None else proj_k
        proj_v = proj if proj_v is None else proj_v
    proj_k = np.asarray(proj_k, dtype=float)
    proj_v = np.asarray(proj_v, dtype=float)
    n = f_g.shape[0]
    if proj_k.shape[0] != n or proj_v.shape != proj_k.shape:
        raise ShapeMismatchError(f"projections must both be ({n}, k), got {proj_k.shape} and {proj_v.shape}")
    g = relu(f_g @ w["fuse.in_w"] + w["fuse.in_b"])
    return lowrank_attention(g @ w["fuse.q"], g @ w["fuse.k"], g @ w["fuse.v"], w.h,
                             proj_k, proj_v, np.sqrt(d))


def temporal_encode(f_obj_t, f_obj_prev, w: BlockWeights) -> np.ndarray:
    """Current-frame features enriched with the previous frame's."""
    f = _features(f_obj_t, "f_obj_t")
    fp = _features(f_obj_prev, "f_obj_prev")
    if f.shape != fp.shape:
        raise ShapeMismatchError(f"frame features differ in shape: {f.shape} vs {fp.shape}")
    d = w.params.d
    _width(f, d, "f_obj_t")

    f_dot = layer_norm(f + multi_head(f, f, f, w, "temp.mha1"), w["temp.norm1.gain"], w["temp.norm1.bias"])
    sim = softmax(f_dot @ fp.T, axis=1)
    # filter([s_ij * f_j ; f_i]) splits into a previous-frame and a current-frame term
    w_prev, w_cur = w["temp.filter_w"][:d], w["temp.filter_w"][d:]
    g = fp @ w_prev
    pooled = np.max(sim[:, :, None] * g[None, :, :], axis=1)
    f_ddot = pooled + f @ w_cur + w["temp.filter_b"]
    return layer_norm(f_ddot + multi_head(f_dot, f_ddot, f_ddot, w, "temp.mha2"),
                      w["temp.norm2.gain"], w["temp.norm2.bias"])


def shape_filter_inputs(f_obj_t, prior_feat, prior_coords) -> np.ndarray:
    """(N, N_r, d + 3) tensor of ``[s_ij * prior_feat_j ; coords_j]``."""
    f = _features(f_obj_t, "f_obj_t")
    pf = _features(prior_feat, "prior_feat")
    rho = _features(prior_coords, "prior_coords")
    if rho.shape != (pf.shape[0], 3):
        raise ShapeMismatchError(f"prior_coords must be ({pf.shape[0]}, 3), got {rho.shape}")
    if pf.shape[1] != f.shape[1]:
        raise ShapeMismatchError("prior_feat and f_obj_t differ in width")
    sim = softmax(f @ pf.T, axis=1)
    weighted = sim[:, :, None] * pf[None, :, :]
    coords = np.broadcast_to(rho[None, :, :], (f.shape[0],) + rho.shape)
    return np.concatenate([weighted, coords], axis=2)


def shape_filter_decode(f_obj_t, f_temp, prior_feat, prior_coords, w: BlockWeights) -> np.ndarray:
    """Features augmented by the categorical shape prior (max-pool over prior points)."""
    f = _features(f_obj_t, "f_obj_t")
    ft = _features(f_temp, "f_temp")
    if f.shape != ft.shape:
        raise ShapeMismatchError(f"f_obj_t and f_temp differ in shape: {f.shape} vs {ft.shape}")
    _width(f, w.params.d, "f_obj_t")
    x = shape_filter_inputs(f, prior_feat, prior_coords)
    f_tri = np.max(x @ w["shape.filter_w"] + w["shape.filter_b"], axis=1)
    f_aug = layer_norm(f_tri + multi_head(f_tri, ft, ft, w, "shape.mha"),
                       w["shape.norm1.gain"], w["shape.norm1.bias"])
    ffn = relu(f_aug @ w["shape.ffn_w1"] + w["shape.ffn_b1"]) @ w["shape.ffn_w2"] + w["shape.ffn_b2"]
    return layer_norm(f_aug + ffn, w["shape.norm2.gain"], w["shape.norm2.bias"])


def keypoint_projection_forward(f_obj, f_temp, f_aug, w: BlockWeights) -> np.ndarray:
    """(n, N) projection with rows on the simplex; keypoints are ``M @ points``."""
    q = _features(f_obj, "f_obj")
    k = _features(f_temp, "f_temp")
    v = _features(f_aug, "f_aug")
    if not q.shape == k.shape == v.shape:
        raise ShapeMismatchError(f"inputs differ in shape: {q.shape}, {k.shape}, {v.shape}")
    _width(q, w.params.d, "f_obj")
    proj = context_projection(q, w, "kp.proj")
    a = lowrank_attention(q @ w["kp.q"], k @ w["kp.k"], v @ w["kp.v"], w.h, proj, proj, np.sqrt(w.params.d))
    return softmax((a @ w["kp.head"]).T, axis=1)


def quadratic_attention(q, k, v, h: int, scale: float) -> np.ndarray:
    """Full (N, N) multi-head attention; reference for the low-rank path."""
    dh = q.shape[1] // h
    heads = []
    for i in range(h):
        s = slice(i * dh, (i + 1) * dh)
        heads.append(softmax(q[:, s] @ k[:, s].T / scale, axis=1) @ v[:, s])
    return np.hstack(heads)


def toy_image_features(points, colors, d: int, seed: int = 0) -> np.ndarray:
    """Seeded linear embedding of per-point color and position."""
    x = np.hstack([np.asarray(colors, dtype=float), np.asarray(points, dtype=float)])
    rng = np.random.default_rng([seed, 11])
    bound = 1.0 / np.sqrt(x.shape[1])
    return x @ rng.uniform(-bound, bound, size=(x.shape[1], d))
