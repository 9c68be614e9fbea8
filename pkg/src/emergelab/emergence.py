"""Emergence estimates: how many measures cover the cloud of Birkhoff measures.

For each sampled initial point ``x`` the empirical measure of its first
``n`` iterates is computed.  ``E(f, eps)`` is estimated as the smallest
number of centres, chosen among the cloud itself, whose mean W1 distance
to the cloud is at most ``eps``.  Restricting centres to the cloud can at
most double the optimal residual (triangle inequality), so every reported
``N`` is an upper bound of a discrete relaxation, not the exact minimum.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .systems import SystemSpec, UsageError, param_vector
from .transport import DiscreteMeasure, GroundMetric, pairwise_w1

log = logging.getLogger(__name__)

__all__ = [
    "EmergenceQuery", "BirkhoffCloud", "CoverResult", "EmergenceCurve",
    "DegenerateCloudError", "SaturationError", "birkhoff_cloud",
    "covering_number", "kmedian", "emergence_curve", "classify_scaling", "fit_loglog",
]

CENTER_NOTE = ("centres restricted to sampled measures: residual is at most twice "
               "the optimum over all probability measures")


class DegenerateCloudError(RuntimeError):
    pass


class SaturationError(RuntimeError):
    def __init__(self, epsilon: float, floor: float, n_centers: int):
        super().__init__(f"epsilon={epsilon:g} not reached with {n_centers} centres; "
                         f"floor residual {floor:.6g}")
        self.epsilon = epsilon
        self.floor = floor
        self.n_centers = n_centers


@dataclass(frozen=True)
class EmergenceQuery:
    n_ladder: tuple[int, ...] = (1000, 10000, 100000)
    sample_count: int = 400
    epsilons: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    seed: int = 0
    quantize_cell: float | None = None

    def __post_init__(self):
        ladder = tuple(int(n) for n in self.n_ladder)
        eps = tuple(float(e) for e in self.epsilons)
        if not ladder or any(n < 1 for n in ladder) or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise UsageError("n_ladder must be a nonempty increasing list of positive lengths")
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise UsageError("epsilons must be positive and strictly decreasing")
        if self.sample_count < 10:
            raise UsageError("sample_count must be at least 10")
        if self.quantize_cell is not None and not self.quantize_cell > 0:
            raise UsageError("quantize_cell must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "n_ladder", ladder)
        object.__setattr__(self, "epsilons", eps)

    def to_dict(self) -> dict:
        return {"n_ladder": list(self.n_ladder), "sample_count": self.sample_count,
                "epsilons": list(self.epsilons), "seed": int(self.seed),
                "quantize_cell": self.quantize_cell}


@dataclass
class BirkhoffCloud:
    measures: list[DiscreteMeasure]
    sample_weights: np.ndarray
    initial_points: np.ndarray
    survivors: np.ndarray
    n: int

    @property
    def survivor_fraction(self) -> float:
        return float(self.survivors.mean())

    @property
    def reliable(self) -> bool:
        return self.survivor_fraction >= 0.5


def sample_initial_points(system: SystemSpec, count: int, seed: int) -> np.ndarray:
    lo, hi = system.box
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((count, system.dim))


def birkhoff_cloud(system: SystemSpec, param, query: EmergenceQuery,
                   n: int | None = None) -> BirkhoffCloud:
    """Empirical measures of length-``n`` orbits from uniform random starts."""
    a = param_vector(system, param)
    n = query.n_ladder[-1] if n is None else int(n)
    X0 = sample_initial_points(system, query.sample_count, query.seed)
    lo, _ = system.box
    cell = query.quantize_cell
    S = len(X0)
    alive = np.ones(S, dtype=bool)
    parts: list[list[tuple[np.ndarray, np.ndarray]]] = [[] for _ in range(S)]
    for block, esc in system.iterate(X0, a, n):
        alive &= ~esc.any(axis=1)
        if cell is not None:
            block = lo + (np.floor((block - lo) / cell) + 0.5) * cell
        for s in np.flatnonzero(alive):
            parts[s].append(np.unique(block[s], axis=0, return_counts=True))
    if not alive.any():
        raise DegenerateCloudError(f"all {S} sampled orbits escaped within {n} steps")
    measures = []
    for s in np.flatnonzero(alive):
        atoms = np.concatenate([p[0] for p in parts[s]])
        counts = np.concatenate([p[1] for p in parts[s]])
        uniq, inv = np.unique(atoms, axis=0, return_inverse=True)
        merged = np.bincount(inv.reshape(-1), weights=counts, minlength=len(uniq))
        measures.append(DiscreteMeasure(uniq, merged / n))
    k = len(measures)
    cloud = BirkhoffCloud(measures, np.full(k, 1.0 / k), X0, alive, n)
    if not cloud.reliable:
        log.warning("survivor fraction %.3f < 0.5: run flagged unreliable", cloud.survivor_fraction)
    return cloud


# ---------------------------------------------------------------------------
# discrete k-median
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverResult:
    epsilon: float
    N: int
    residual: float
    center_ids: tuple[int, ...]
    std_error: float = 0.0
    upper_bound: bool = True


def _objective(D, w, centers) -> tuple[float, np.ndarray]:
    d1 = D[list(centers)].min(axis=0)
    return float(np.dot(w, d1)), d1


def _local_search(D, w, centers: list[int]) -> tuple[list[int], float, np.ndarray]:
    cur, d1 = _objective(D, w, centers)
    while len(centers) < len(D):
        new, c, pos = _kernels.best_swap(D, w, np.asarray(centers, dtype=np.int64))
        if c < 0 or new >= cur - 1e-12 * max(1.0, cur):
            break
        centers[pos] = int(c)
        cur, d1 = _objective(D, w, centers)
    return centers, cur, d1


def _greedy_path(D, w, k_max: int):
    """Yield ``(centres, residual, per-sample distances)`` for N = 1, 2, ..., k_max.

    Each rung adds the centre that lowers the mean distance most, then runs
    best-improvement single swaps to a local optimum.
    """
    S = len(D)
    centers: list[int] = []
    d1 = np.full(S, np.inf)
    for _ in range(min(k_max, S)):
        gains = np.asarray(_kernels.add_costs(D, w, d1))
        if centers:
            gains[centers] = np.inf
        centers.append(int(np.argmin(gains)))
        centers, cur, d1 = _local_search(D, w, centers)
        yield list(centers), cur, d1


def _bootstrap_se(dist: np.ndarray, w: np.ndarray, seed: int, reps: int = 200) -> float:
    if len(dist) < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    p = w / w.sum()
    idx = rng.choice(len(dist), size=(reps, len(dist)), p=p)
    return float(dist[idx].mean(axis=1).std(ddof=1))


def _as_matrix(cloud, metric, threads):
    if isinstance(cloud, np.ndarray):
        return np.asarray(cloud, dtype=float)
    return pairwise_w1(list(cloud), metric, threads=threads)


def covering_number(cloud, sample_weights=None, epsilon: float = 0.1, *,
                    metric: GroundMetric = GroundMetric(), max_centers: int | None = None,
                    seed: int = 0, threads: int = 1) -> CoverResult:
    """Smallest ``N`` (found by greedy + swap search) with mean min-distance <= ``epsilon``.

    ``cloud`` is a list of measures or a precomputed distance matrix.
    """
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    D = _as_matrix(cloud, metric, threads)
    S = len(D)
    if S == 0:
        raise UsageError("empty cloud")
    w = np.full(S, 1.0 / S) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    k_max = S if max_centers is None else max(1, min(int(max_centers), S))
    residual = math.inf
    for centers, residual, d1 in _greedy_path(D, w, k_max):
        if residual <= epsilon:
            return CoverResult(epsilon, len(centers), residual, tuple(sorted(centers)),
                               _bootstrap_se(d1, w, seed))
    raise SaturationError(epsilon, residual, k_max)


def kmedian(D, w, k: int) -> tuple[float, tuple[int, ...]]:
    """Greedy + swap discrete k-median objective and centres for exactly ``k`` centres."""
    D = np.asarray(D, dtype=float)
    last = None
    for last in _greedy_path(D, np.asarray(w, dtype=float), k):
        pass
    centers, cur, _ = last
    return cur, tuple(sorted(centers))


def _cover_all(D, w, epsilons, seed) -> list[CoverResult]:
    out: list[CoverResult] = []
    pending = list(epsilons)
    for centers, residual, d1 in _greedy_path(D, w, len(D)):
        while pending and residual <= pending[0]:
            out.append(CoverResult(pending.pop(0), len(centers), residual,
                                   tuple(sorted(centers)), _bootstrap_se(d1, w, seed)))
        if not pending:
            break
    return out


# ---------------------------------------------------------------------------
# curves and scaling classes
# ---------------------------------------------------------------------------

@dataclass
class EmergenceCurve:
    points: list[CoverResult]
    n_used: int
    survivor_fraction: float = 1.0
    scaling: str = "Undetermined"
    slope: float = float("nan")
    r2: float = float("nan")
    stabilization: float = 0.0
    ladder: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([p.epsilon for p in self.points])

    @property
    def counts(self) -> np.ndarray:
        return np.array([p.N for p in self.points])

    @property
    def stabilized(self) -> bool:
        return self.stabilization <= 0.1

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["epsilon", "N", "residual", "n_used", "survivor_fraction"])
        for p in self.points:
            wr.writerow([f"{p.epsilon:.17g}", p.N, f"{p.residual:.17g}", self.n_used,
                         f"{self.survivor_fraction:.17g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "n_used": self.n_used, "scaling": self.scaling,
            "slope": None if math.isnan(self.slope) else self.slope,
            "r2": None if math.isnan(self.r2) else self.r2,
            "survivor_fraction": self.survivor_fraction,
            "stabilization": self.stabilization, "stabilized": self.stabilized,
            "epsilons": [p.epsilon for p in self.points],
            "N": [p.N for p in self.points],
            "residual": [p.residual for p in self.points],
            "residual_std_error": [p.std_error for p in self.points],
            "ladder": {str(k): v for k, v in self.ladder.items()},
            "notes": list(self.notes),
        }


def fit_loglog(epsilons, counts) -> tuple[float, float]:
    """Least-squares slope of log N against log(1/eps), with r^2."""
    x = -np.log(np.asarray(epsilons, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    if np.ptp(y) == 0:
        return 0.0, 1.0
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    r2 = 1.0 - float(resid @ resid) / float(((y - y.mean()) ** 2).sum())
    return float(slope), r2


def _window_slopes(epsilons, counts, width=3) -> list[float]:
    return [fit_loglog(epsilons[i:i + width], counts[i:i + width])[0]
            for i in range(len(epsilons) - width + 1)]


def classify_scaling(curve) -> str:
    """F, P(s), SupP or Undetermined from the (eps, N) points of ``curve``.

    Accepts an :class:`EmergenceCurve` or a pair ``(epsilons, counts)``
    ordered by decreasing epsilon.  SupP only means the local slope is still
    growing at the smallest epsilon measured.
    """
    if isinstance(curve, EmergenceCurve):
        eps, N = curve.epsilons, curve.counts
    else:
        eps, N = (np.asarray(v, dtype=float) for v in curve)
    if len(eps) < 4:
        raise UsageError("need at least 4 epsilon points to classify")
    slope, r2 = fit_loglog(eps, N)
    if slope < 0.1 and N[-1] == N[0]:
        return "F"
    win = _window_slopes(eps, N)
    for t in range(len(win) - 2):
        a, b, c = win[t:t + 3]
        if a > 0 and b > 1.05 * a and c > 1.05 * b:
            return "SupP"
    if slope >= 0.1 and r2 >= 0.9:
        half = len(eps) // 2
        tail_slope, _ = fit_loglog(eps[half:], N[half:]) if len(eps) - half >= 2 else (slope, 1.0)
        if tail_slope <= 1.5 * slope:
            return f"P({slope:.3f})"
    return "Undetermined"


def emergence_curve(system: SystemSpec, param, query: EmergenceQuery, *,
                    metric: GroundMetric | None = None, threads: int = 1) -> EmergenceCurve:
    metric = GroundMetric.for_system(system) if metric is None else metric
    per_rung: dict[int, list[CoverResult]] = {}
    cloud = None
    for n in query.n_ladder:
        cloud = birkhoff_cloud(system, param, query, n)
        D = pairwise_w1(cloud.measures, metric, threads=threads)
        per_rung[n] = _cover_all(D, cloud.sample_weights, query.epsilons, query.seed)
        log.info("n=%d: N=%s", n, [c.N for c in per_rung[n]])
    last = per_rung[query.n_ladder[-1]]
    # monotone regularisation: N never decreases as epsilon shrinks
    points, running = [], 0
    for p in last:
        if p.N < running:
            p = CoverResult(p.epsilon, running, p.residual, p.center_ids, p.std_error)
        running = p.N
        points.append(p)
    stab = 0.0
    if len(query.n_ladder) > 1:
        prev = per_rung[query.n_ladder[-2]]
        stab = max(abs(a.N - b.N) / b.N for a, b in zip(last, prev))
    curve = EmergenceCurve(points, query.n_ladder[-1], cloud.survivor_fraction,
                           stabilization=stab,
                           ladder={n: [c.N for c in r] for n, r in per_rung.items()},
                           notes=[CENTER_NOTE])
    if not cloud.reliable:
        curve.notes.append("survivor fraction below 0.5: unreliable")
    if not curve.stabilized:
        curve.notes.append("N not stabilised across the last two orbit lengths")
    curve.slope, curve.r2 = fit_loglog(curve.epsilons, curve.counts)
    curve.scaling = classify_scaling(curve) if len(points) >= 4 else "Undetermined"
    log.info(CENTER_NOTE)
    return curve


# ---------------------------------------------------------------------------
# SVG rendering
# ---------------------------------------------------------------------------

def curve_svg(curve: EmergenceCurve, stamp: str = "") -> str:
    """Self-contained log-log plot of N against 1/eps with the fitted line."""
    W, H, M = 480, 360, 60
    x = 1.0 / curve.epsilons
    y = curve.counts.astype(float)
    x0, x1 = math.floor(math.log10(x.min())), math.ceil(math.log10(x.max()))
    y0, y1 = math.floor(math.log10(y.min())), math.ceil(math.log10(y.max()))
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)

    def px(v):
        return M + (math.log10(v) - x0) / (x1 - x0) * (W - 2 * M)

    def py(v):
        return H - M - (math.log10(v) - y0) / (y1 - y0) * (H - 2 * M)

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f"<!-- generated {stamp} -->",
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
    for e in range(x0, x1 + 1):
        X = px(10.0 ** e)
        out.append(f'<line x1="{X:.2f}" y1="{M}" x2="{X:.2f}" y2="{H - M}" stroke="#ccc"/>')
        out.append(f'<text x="{X:.2f}" y="{H - M + 16}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        Y = py(10.0 ** e)
        out.append(f'<line x1="{M}" y1="{Y:.2f}" x2="{W - M}" y2="{Y:.2f}" stroke="#ccc"/>')
        out.append(f'<text x="{M - 6}" y="{Y + 4:.2f}" text-anchor="end">1e{e}</text>')
    out.append(f'<rect x="{M}" y="{M}" width="{W - 2 * M}" height="{H - 2 * M}" '
               'fill="none" stroke="black"/>')
    if not math.isnan(curve.slope):
        lx = np.log(x)
        icept = float(np.mean(np.log(y)) - curve.slope * np.mean(lx))
        ends = [x.min(), x.max()]
        pts = " ".join(f"{px(v):.2f},{py(math.exp(icept + curve.slope * math.log(v))):.2f}"
                       for v in ends)
        out.append(f'<polyline points="{pts}" fill="none" stroke="#c33" stroke-dasharray="5,3"/>')
    for xv, yv in zip(x, y):
        out.append(f'<circle cx="{px(xv):.2f}" cy="{py(yv):.2f}" r="3.5" fill="#236"/>')
    out.append(f'<text x="{W / 2}" y="{H - 18}" text-anchor="middle">1/epsilon</text>')
    out.append(f'<text x="16" y="{H / 2}" transform="rotate(-90 16 {H / 2})" '
               'text-anchor="middle">N</text>')
    out.append(f'<text x="{M}" y="{M - 12}">slope = {curve.slope:.4f} '
               f'(r2 = {curve.r2:.4f}), class {curve.scaling}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
