"""Wall-time growth of the low-rank and quadratic attention paths."""

from __future__ import annotations

import time

import numpy as np

from .blocks import context_projection, lowrank_attention, quadratic_attention
from .weights import BlockWeights, NeuralParams


def _timed(fn, loops: int) -> float:
    t0 = time.perf_counter()
    for _ in range(loops):
        fn()
    return (time.perf_counter() - t0) / loops


def attention_scaling(n: int = 2048, runs: int = 5, seed: int = 0, params: NeuralParams | None = None,
                      min_run_seconds: float = 0.02) -> dict:
    """Median over ``runs`` of the time ratio when N doubles from ``n`` to ``2n`` at fixed k.

    Within a run both sizes are timed back to back, so slow drift in machine
    load affects numerator and denominator alike. Each timing repeats the call
    enough times to last ``min_run_seconds`` at size ``n``.
    """
    params = params or NeuralParams(seed=seed)
    w = BlockWeights.seeded(params)
    rng = np.random.default_rng(seed)
    scale = np.sqrt(params.d)
    calls = {}
    for size in (n, 2 * n):
        x = rng.normal(size=(size, params.d))
        q, k, v = x @ w["fuse.q"], x @ w["fuse.k"], x @ w["fuse.v"]
        proj = context_projection(x, w)
        calls[("lowrank", size)] = lambda q=q, k=k, v=v, p=proj: lowrank_attention(q, k, v, w.h, p, p, scale)
        calls[("quadratic", size)] = lambda q=q, k=k, v=v: quadratic_attention(q, k, v, w.h, scale)
    loops = {}
    for kind in ("lowrank", "quadratic"):
        calls[(kind, n)]()  # warm-up
        calls[(kind, 2 * n)]()
        once = _timed(calls[(kind, n)], 1)
        loops[kind] = max(1, int(np.ceil(min_run_seconds / max(once, 1e-9))))
    ratios = {"lowrank": [], "quadratic": []}
    times = {key: [] for key in calls}
    for _ in range(runs):
        for kind in ratios:
            small = _timed(calls[(kind, n)], loops[kind])
            large = _timed(calls[(kind, 2 * n)], loops[kind])
            times[(kind, n)].append(small)
            times[(kind, 2 * n)].append(large)
            ratios[kind].append(large / small)
    return {
        "lowrank_ratio": float(np.median(ratios["lowrank"])),
        "quadratic_ratio": float(np.median(ratios["quadratic"])),
        "times": {f"{kind}@{size}": float(np.median(t)) for (kind, size), t in times.items()},
    }
