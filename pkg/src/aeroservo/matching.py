"""Keypoint generation from a projection matrix and coarse-to-fine matching.

The coarse prior is slot identity (keypoint ``i`` of the previous frame
corresponds to slot ``i`` of the current one). The fine stage scores feature
similarity, turns it into confidences with a dual softmax and keeps mutual
nearest neighbours above a confidence threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

TAU = 0.1
THETA_C = 0.45
N_KEYPOINTS = 512
N_POINTS = 2048


@dataclass(frozen=True)
class MatchingParams:
    tau: float = TAU
    theta_c: float = THETA_C
    n: int = N_KEYPOINTS
    N: int = N_POINTS

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.theta_c <= 1.0:
            raise ValueError("theta_c must lie in [0, 1]")
        if not 0 < self.n <= self.N:
            raise ValueError("need 0 < n <= N")


@dataclass(frozen=True)
class KeypointSet:
    coords: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        f = np.asarray(self.features, dtype=float)
        if c.ndim != 2 or c.shape[1] != 3 or c.shape[0] == 0:
            raise ValueError("coords must be a non-empty (n, 3) array")
        if f.ndim != 2 or f.shape[0] != c.shape[0]:
            raise ValueError("features must be row-aligned with coords")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(f))):
            raise ValueError("keypoint rows must be finite")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "features", f)

    def __len__(self):
        return self.coords.shape[0]


@dataclass(frozen=True)
class MatchSet:
    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    confidences: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        c = np.asarray(self.confidences, dtype=float).reshape(-1)
        if len(p) != len(c):
            raise ValueError("pairs and confidences must have equal length")
        object.__setattr__(self, "pairs", p)
        object.__setattr__(self, "confidences", c)

    def __len__(self):
        return len(self.pairs)

    def as_set(self) -> set:
        return {(int(i), int(j)) for i, j in self.pairs}


def project_keypoints(m, points) -> np.ndarray:
    """``M @ P``: each keypoint is a weighted combination of the observed points."""
    m = np.asarray(m, dtype=float)
    points = np.asarray(points, dtype=float)
    if m.ndim != 2 or points.ndim != 2 or m.shape[1] != points.shape[0]:
        raise ValueError(f"projection {m.shape} incompatible with points {points.shape}")
    return m @ points


def score_matrix(f_prev, f_curr, tau: float = TAU) -> np.ndarray:
    """``S[i, j] = <f_prev[i], f_curr[j]> / tau``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    f_prev = np.asarray(f_prev, dtype=float)
    f_curr = np.asarray(f_curr, dtype=float)
    if f_prev.shape[1] != f_curr.shape[1]:
        raise ValueError("feature dimensions differ")
    return (f_prev @ f_curr.T) / tau


def dual_softmax(s) -> np.ndarray:
    """Row softmax times column softmax, elementwise."""
    s = np.asarray(s, dtype=float)
    return softmax(s, axis=1) * softmax(s, axis=0)


def mnn_filter(p_c, theta_c: float = THETA_C) -> MatchSet:
    """Mutual nearest neighbours of ``p_c`` with confidence ``>= theta_c``.

    ``argmax`` breaks ties by the lowest index, so the result is deterministic.
    """
    p_c = np.asarray(p_c, dtype=float)
    if p_c.size == 0:
        return MatchSet()
    row_best = np.argmax(p_c, axis=1)
    col_best = np.argmax(p_c, axis=0)
    rows = np.arange(p_c.shape[0])
    conf = p_c[rows, row_best]
    keep = (col_best[row_best] == rows) & (conf >= theta_c)
    return MatchSet(np.column_stack([rows[keep], row_best[keep]]), conf[keep])


def match_features(f_prev, f_curr, tau: float = TAU, theta_c: float = THETA_C) -> MatchSet:
    return mnn_filter(dual_softmax(score_matrix(f_prev, f_curr, tau)), theta_c)


# --- plain-text records -----------------------------------------------------
#
# KeypointSet: "# keypoints n=<n> d=<d>" then one row per keypoint:
#     x y z f_1 ... f_d
# MatchSet:    "# matches m=<m>" then one row per pair:
#     i j confidence
# Floats use repr() so files round-trip exactly.


def write_keypoints(ks: KeypointSet, fh) -> None:
    n, d = ks.features.shape
    fh.write(f"# keypoints n={n} d={d}\n")
    for c, f in zip(ks.coords, ks.features):
        fh.write(" ".join(repr(float(x)) for x in (*c, *f)) + "\n")


def read_keypoints(fh) -> KeypointSet:
    header = fh.readline().split()
    if header[:2] != ["#", "keypoints"]:
        raise ValueError("not a keypoint record")
    meta = dict(item.split("=") for item in header[2:])
    n, d = int(meta["n"]), int(meta["d"])
    rows = np.array([[float(x) for x in line.split()] for line in fh if line.strip()], dtype=float)
    if rows.shape != (n, 3 + d):
        raise ValueError(f"expected {n} rows of {3 + d} values, got {rows.shape}")
    return KeypointSet(rows[:, :3], rows[:, 3:])


def write_matches(ms: MatchSet, fh) -> None:
    fh.write(f"# matches m={len(ms)}\n")
    for (i, j), c in zip(ms.pairs, ms.confidences):
        fh.write(f"{int(i)} {int(j)} {float(c)!r}\n")


def read_matches(fh) -> MatchSet:
    header = fh.readline().split()
    if header[:2] != ["#", "matches"]:
        raise ValueError("not a match record")
    m = int(header[2].split("=")[1])
    pairs, conf = [], []
    for line in fh:
        if not line.strip():
            continue
        i, j, c = line.split()
        pairs.append((int(i), int(j)))
        conf.append(float(c))
    if len(pairs) != m:
        raise ValueError(f"expected {m} matches, got {len(pairs)}")
    return MatchSet(np.array(pairs, dtype=int).reshape(-1, 2), np.array(conf))


def synthetic_recovery(n: int, dim: int, sigma: float, tau: float, theta_c: float, seed: int) -> float:
    """Fraction of a planted permutation recovered from noisy unit features."""
    rng = np.random.default_rng(seed)
    f_prev = rng.normal(size=(n, dim))
    f_prev /= np.linalg.norm(f_prev, axis=1, keepdims=True)
    perm = rng.permutation(n)
    # slot j of the current frame holds keypoint perm[j]
    f_curr = f_prev[perm] + rng.normal(0.0, sigma, size=(n, dim))
    matches = match_features(f_prev, f_curr, tau, theta_c)
    truth = np.empty(n, dtype=int)
    truth[perm] = np.arange(n)
    correct = np.sum(truth[matches.pairs[:, 0]] == matches.pairs[:, 1]) if len(matches) else 0
    return float(correct) / n
