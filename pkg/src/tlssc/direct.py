"""DIRECT (DIviding RECTangles) global minimization over a box.

Works on the unit cube internally. Each hyperrectangle stores a per-dimension
trisection level ``k`` so its side is ``3**-k`` and comparisons of sizes are
exact integer comparisons.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

PENALTY = 1e30


@dataclass(eq=False)  # identity semantics; fields hold arrays
class HyperRect:
    center: np.ndarray
    levels: np.ndarray  # side length along dim i is 3 ** -levels[i]
    f_center: float
    index: int = 0

    @property
    def half_sides(self) -> np.ndarray:
        return 0.5 * 3.0 ** (-self.levels.astype(float))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.half_sides))

    @property
    def size_key(self) -> tuple[int, ...]:
        """Rectangles with equal keys have identical diameters."""
        return tuple(sorted(int(k) for k in self.levels))

    @property
    def volume(self) -> float:
        return float(np.prod(3.0 ** (-self.levels.astype(float))))


@dataclass(frozen=True)
class OptimizerConfig:
    max_evals: int = 2000
    epsilon: float = 1e-4
    max_iter: Optional[int] = None

    def __post_init__(self):
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass
class DirectResult:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    history: list[tuple[tuple[float, ...], float]] = field(default_factory=list, repr=False)

    def __iter__(self) -> Iterator:
        # allows ``x, f, evals = minimize(...)``
        return iter((self.x, self.fun, self.nfev))


def _diam_from_key(key: tuple[int, ...]) -> float:
    return 0.5 * math.sqrt(sum(9.0 ** -k for k in key))


def select_potentially_optimal(
    rects: Sequence[HyperRect], f_min: float, epsilon: float = 1e-4
) -> list[HyperRect]:
    """Rectangles on the lower-right convex hull of (diameter, f) that pass the
    epsilon-improvement test.

    Only the best value of each size competes. Every rectangle tied at that
    value is returned, ordered by creation index.
    """
    if not rects:
        return []
    best: dict[tuple[int, ...], list[HyperRect]] = {}
    for r in rects:
        key = r.size_key
        cur = best.get(key)
        if cur is None or r.f_center < cur[0].f_center:
            best[key] = [r]
        elif r.f_center == cur[0].f_center:
            cur.append(r)
    classes = sorted(best.items(), key=lambda kv: _diam_from_key(kv[0]))
    d = [_diam_from_key(k) for k, _ in classes]
    f = [group[0].f_center for _, group in classes]

    # start at the smallest f, preferring the larger rectangle on ties
    start = min(range(len(f)), key=lambda i: (f[i], -d[i]))
    hull: list[int] = []
    for i in range(start, len(f)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies strictly above the chord a -> i
            cross = (d[b] - d[a]) * (f[i] - f[a]) - (f[b] - f[a]) * (d[i] - d[a])
            if cross < 0:
                hull.pop()
            else:
                break
        hull.append(i)

    threshold = f_min - (epsilon * abs(f_min) if f_min != 0 else 1e-8)
    chosen = []
    for pos, i in enumerate(hull):
        if pos + 1 < len(hull):
            j = hull[pos + 1]
            k_max = (f[j] - f[i]) / (d[j] - d[i])
            if f[i] - k_max * d[i] > threshold:
                continue
        chosen.extend(sorted(classes[i][1], key=lambda r: r.index))
    return chosen


def trisect(
    rect: HyperRect,
    objective: Callable[[np.ndarray], float],
    counter: Optional[Iterator[int]] = None,
) -> list[HyperRect]:
    """Split ``rect`` along all its longest sides.

    Samples ``center +- side/3`` on each longest dimension and divides the
    dimension with the best sampled value first, so the best points end up
    in the largest children. Returns the 2k new rectangles followed by the
    shrunken center rectangle (which keeps the parent's index).
    """
    counter = counter if counter is not None else itertools.count(rect.index + 1)
    lmin = rect.levels.min()
    dims = [int(i) for i in np.flatnonzero(rect.levels == lmin)]
    delta = 3.0 ** (-(int(lmin) + 1))
    samples = {}
    for i in dims:
        lo = rect.center.copy()
        hi = rect.center.copy()
        lo[i] -= delta
        hi[i] += delta
        samples[i] = ((lo, objective(lo)), (hi, objective(hi)))
    order = sorted(dims, key=lambda i: (min(samples[i][0][1], samples[i][1][1]), i))

    levels = rect.levels.copy()
    children = []
    for i in order:
        levels = levels.copy()
        levels[i] += 1
        for point, value in samples[i]:
            children.append(HyperRect(point, levels.copy(), value, next(counter)))
    children.append(HyperRect(rect.center, levels.copy(), rect.f_center, rect.index))
    return children


def minimize(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[Sequence[float]],
    config: Optional[OptimizerConfig] = None,
    *,
    keep_history: bool = False,
    callback: Optional[Callable[[int, float], None]] = None,
) -> DirectResult:
    """Minimize ``objective`` over the box ``bounds`` (one ``(lo, hi)`` per dimension).

    Non-finite objective values are replaced by a large penalty. The run stops
    once ``config.max_evals`` evaluations have been spent; the last division
    may overshoot by at most ``2 * dim`` evaluations.
    """
    config = config or OptimizerConfig()
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] < 1:
        raise ValueError("bounds must be a sequence of (lo, hi) pairs")
    if not np.all(np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("every bound needs finite lo < hi")
    lower, width = b[:, 0], b[:, 1] - b[:, 0]
    n = len(b)

    history: list[tuple[tuple[float, ...], float]] = []
    state = {"nfev": 0, "best_f": math.inf, "best_u": None}

    def f_unit(u: np.ndarray) -> float:
        x = lower + u * width
        value = float(objective(x))
        if not math.isfinite(value):
            value = PENALTY
        state["nfev"] += 1
        if value < state["best_f"]:
            state["best_f"] = value
            state["best_u"] = u.copy()
        if keep_history:
            history.append((tuple(x.tolist()), value))
        return value

    counter = itertools.count(1)
    c0 = np.full(n, 0.5)
    rects = [HyperRect(c0, np.zeros(n, dtype=int), f_unit(c0), 0)]
    nit = 0
    while state["nfev"] < config.max_evals:
        if config.max_iter is not None and nit >= config.max_iter:
            break
        nit += 1
        chosen = select_potentially_optimal(rects, state["best_f"], config.epsilon)
        chosen_ids = {id(r) for r in chosen}
        # divide larger rectangles first within an iteration
        chosen.sort(key=lambda r: (-r.diameter, r.index))
        remaining = [r for r in rects if id(r) not in chosen_ids]
        for k, r in enumerate(chosen):
            if state["nfev"] >= config.max_evals:
                remaining.extend(chosen[k:])
                break
            remaining.extend(trisect(r, f_unit, counter))
        rects = remaining
        if callback is not None:
            callback(nit, state["best_f"])

    x_best = lower + state["best_u"] * width
    return DirectResult(x_best, state["best_f"], state["nfev"], nit, history)
