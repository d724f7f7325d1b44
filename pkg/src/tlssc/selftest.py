"""Oracle checks for the optimizer, run by ``tlssc opt-selftest``."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .calibration import DEFAULT_BOUNDS
from .direct import OptimizerConfig, minimize


def quadratic(x):
    return float(np.sum((np.asarray(x) - 0.3) ** 2))


def multimodal(x):
    x = np.asarray(x)
    return float(np.sum(np.sin(5 * x) + (x - 0.5) ** 2))


def grid_minimum(f_vectorized, bounds, points_per_dim: int) -> float:
    """Minimum over a full tensor grid, evaluated in slabs along the first axis."""
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in bounds]
    best = np.inf
    for x0 in axes[0]:
        mesh = np.meshgrid(*axes[1:], indexing="ij")
        pts = [np.full_like(mesh[0], x0)] + list(mesh)
        best = min(best, float(np.min(f_vectorized(pts))))
    return best


@dataclass(frozen=True)
class SelftestCase:
    name: str
    f_best: float
    oracle: float
    evals: int
    tol: float
    deterministic: bool
    seconds: float

    @property
    def passed(self) -> bool:
        return self.f_best <= self.oracle + self.tol and self.deterministic


def run_selftest(budget_2d: int = 500, budget_4d: int = 5000) -> list[SelftestCase]:
    cases = []
    specs = [
        ("quadratic-2d", quadratic, [(0.0, 1.0)] * 2, budget_2d,
         lambda p: sum((c - 0.3) ** 2 for c in p), 401),
        ("multimodal-4d", multimodal, list(DEFAULT_BOUNDS), budget_4d,
         lambda p: sum(np.sin(5 * c) + (c - 0.5) ** 2 for c in p), 40),
    ]
    for name, f, bounds, budget, fv, pts in specs:
        t0 = time.perf_counter()
        a = minimize(f, bounds, OptimizerConfig(budget), keep_history=True)
        b = minimize(f, bounds, OptimizerConfig(budget), keep_history=True)
        oracle = grid_minimum(fv, bounds, pts)
        cases.append(
            SelftestCase(name, a.fun, oracle, a.nfev, 1e-3, a.history == b.history, time.perf_counter() - t0)
        )
    return cases

