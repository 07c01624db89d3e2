"""Axis-aligned feature planes queried by nearest stored sample."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .losses import NumericalGuardWarning

PLANES = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}


@dataclass(frozen=True)
class TriplaneFeatures:
    """Per plane: sample coordinates (N, 2) and features (N, d_T)."""

    coords: dict
    features: dict

    def __post_init__(self):
        widths = set()
        for name in PLANES:
            c = np.asarray(self.coords[name], dtype=float)
            f = np.asarray(self.features[name], dtype=float)
            if c.ndim != 2 or c.shape[1] != 2 or f.ndim != 2 or len(c) != len(f) or len(c) == 0:
                raise ValueError(f"plane {name}: need (N, 2) coords row-aligned with (N, d_T) features")
            if not (np.all(np.isfinite(c)) and np.all(np.isfinite(f))):
                raise ValueError(f"plane {name}: non-finite entries")
            widths.add(f.shape[1])
        if len(widths) != 1:
            raise ValueError("planes disagree on d_T")

    @property
    def d_t(self) -> int:
        return np.asarray(self.features["xy"]).shape[1]

    def bounds(self, name: str):
        c = np.asarray(self.coords[name], dtype=float)
        return c.min(axis=0), c.max(axis=0)


def build_triplane(points, plane_features: dict) -> TriplaneFeatures:
    """Planes sampled at the projections of ``points`` onto XY, YZ and XZ."""
    p = np.asarray(points, dtype=float)
    coords = {name: p[:, list(ax)] for name, ax in PLANES.items()}
    return TriplaneFeatures(coords, dict(plane_features))


def triplane_from_weights(points, feats, w) -> TriplaneFeatures:
    """Planes whose features are linear maps of per-point features."""
    f = np.asarray(feats, dtype=float)
    return build_triplane(points, {name: f @ w[f"tri.{name}"] for name in PLANES})


def triplane_lookup(planes: TriplaneFeatures, keypoints):
    """Nearest-sample index per plane, ``(indices (n, 3), clamped (n,))``.

    Projections outside a plane's coordinate range are clamped to it first.
    """
    kp = np.asarray(keypoints, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(kp)):
        raise ValueError("keypoints must be finite")
    idx = np.empty((len(kp), 3), dtype=int)
    clamped = np.zeros(len(kp), dtype=bool)
    for col, (name, ax) in enumerate(PLANES.items()):
        lo, hi = planes.bounds(name)
        q = kp[:, list(ax)]
        qc = np.clip(q, lo, hi)
        clamped |= np.any(qc != q, axis=1)
        _, idx[:, col] = cKDTree(np.asarray(planes.coords[name], dtype=float)).query(qc)
    return idx, clamped


def triplane_sample(planes: TriplaneFeatures, keypoints) -> np.ndarray:
    """(n, 3 * d_T) features: XY, YZ, XZ nearest samples concatenated."""
    idx, clamped = triplane_lookup(planes, keypoints)
    if clamped.any():
        warnings.warn(f"{int(clamped.sum())} keypoint(s) clamped to the plane ranges",
                      NumericalGuardWarning, stacklevel=2)
    return np.hstack([np.asarray(planes.features[name], dtype=float)[idx[:, col]]
                      for col, name in enumerate(PLANES)])
