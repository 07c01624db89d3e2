"""Loop-level re-evaluations of the attention blocks, written without reuse
of the package's helpers. Slow; only for tiny shapes."""

import math

import numpy as np


def softmax_list(xs):
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    s = sum(e)
    return [v / s for v in e]


def matvec_rows(x, w):
    """Row-by-row ``x @ w`` with explicit sums."""
    n, d_in = x.shape
    d_out = w.shape[1]
    out = np.zeros((n, d_out))
    for i in range(n):
        for o in range(d_out):
            out[i, o] = sum(x[i, c] * w[c, o] for c in range(d_in))
    return out


def dot(a, b):
    return sum(float(x) * float(y) for x, y in zip(a, b))


def attend(q, k, v, scale):
    n = q.shape[0]
    out = np.zeros((n, v.shape[1]))
    for i in range(n):
        wts = softmax_list([dot(q[i], k[j]) / scale for j in range(k.shape[0])])
        for j, a in enumerate(wts):
            out[i] += a * v[j]
    return out


def heads(q, k, v, h, scale):
    dh = q.shape[1] // h
    parts = [attend(q[:, i * dh:(i + 1) * dh], k[:, i * dh:(i + 1) * dh], v[:, i * dh:(i + 1) * dh], scale)
             for i in range(h)]
    return np.hstack(parts)


def mha(qi, ki, vi, w, prefix):
    q = matvec_rows(qi, w[prefix + ".q"])
    k = matvec_rows(ki, w[prefix + ".k"])
    v = matvec_rows(vi, w[prefix + ".v"])
    dh = q.shape[1] // w.h
    return matvec_rows(heads(q, k, v, w.h, math.sqrt(dh)), w[prefix + ".o"])


def norm(x, gain, bias, eps=1e-5):
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        mu = sum(x[i]) / x.shape[1]
        var = sum((c - mu) ** 2 for c in x[i]) / x.shape[1]
        out[i] = [(c - mu) / math.sqrt(var + eps) * g + b for c, g, b in zip(x[i], gain, bias)]
    return out


def wsa(img, pts, w):
    def branch(a, b):
        q = matvec_rows(a, w["wsa.q"])
        k = matvec_rows(b, w["wsa.k"])
        v = matvec_rows(a, w["wsa.v"])
        att = attend(q, k, v, 1.0)
        z = matvec_rows(att - q, w["wsa.phi_w"]) + w["wsa.phi_b"]
        return np.where(z > 0, z, 0.0)

    return branch(img, pts), branch(pts, img)


def temporal(f, fp, w):
    d = f.shape[1]
    n = f.shape[0]
    f_dot = norm(f + mha(f, f, f, w, "temp.mha1"), w["temp.norm1.gain"], w["temp.norm1.bias"])
    f_ddot = np.zeros((n, d))
    for i in range(n):
        s = softmax_list([dot(f_dot[i], fp[j]) for j in range(n)])
        best = None
        for j in range(n):
            cat = np.concatenate([s[j] * fp[j], f[i]])
            y = np.array([dot(cat, w["temp.filter_w"][:, o]) + w["temp.filter_b"][o] for o in range(d)])
            best = y if best is None else np.maximum(best, y)
        f_ddot[i] = best
    return norm(f_ddot + mha(f_dot, f_ddot, f_ddot, w, "temp.mha2"), w["temp.norm2.gain"], w["temp.norm2.bias"])


def shape_filter(f, ft, pf, rho, w):
    d = f.shape[1]
    n, nr = f.shape[0], pf.shape[0]
    f_tri = np.zeros((n, d))
    for i in range(n):
        s = softmax_list([dot(f[i], pf[j]) for j in range(nr)])
        best = None
        for j in range(nr):
            cat = np.concatenate([s[j] * pf[j], rho[j]])
            y = np.array([dot(cat, w["shape.filter_w"][:, o]) + w["shape.filter_b"][o] for o in range(d)])
            best = y if best is None else np.maximum(best, y)
        f_tri[i] = best
    f_aug = norm(f_tri + mha(f_tri, ft, ft, w, "shape.mha"), w["shape.norm1.gain"], w["shape.norm1.bias"])
    hidden = matvec_rows(f_aug, w["shape.ffn_w1"]) + w["shape.ffn_b1"]
    hidden = np.where(hidden > 0, hidden, 0.0)
    ffn = matvec_rows(hidden, w["shape.ffn_w2"]) + w["shape.ffn_b2"]
    return norm(f_aug + ffn, w["shape.norm2.gain"], w["shape.norm2.bias"])


def chamfer(a, b):
    total = 0.0
    for p in a:
        total += min(sum((pc - kc) ** 2 for pc, kc in zip(p, k)) for k in b)
    for k in b:
        total += min(sum((pc - kc) ** 2 for pc, kc in zip(p, k)) for p in a)
    return total
