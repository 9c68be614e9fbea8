"""Periodic orbits by Newton's method, their stability type, and sink censuses."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .systems import SystemSpec, UsageError, param_vector
from .transport import DiscreteMeasure

__all__ = [
    "PeriodicOrbit", "SeedFailure", "SinkCensus", "BasinEstimate", "find_periodic",
    "classify", "classify_multipliers", "sink_census", "basin_measure_estimate", "seed_grid",
    "orbit_multipliers",
]

STEP_TOL = 1e-12
MAX_NEWTON = 50
DIVISOR_TOL = 1e-8
DEDUP_TOL = 1e-6
CLASS_TOL = 1e-6
DEFAULT_GRID = 50
_BLOWUP = 1e8

CLASSES = ("Sink", "Source", "Saddle", "ProjHypSource", "NonHyperbolic")


def classify_multipliers(multipliers, tol: float = CLASS_TOL) -> tuple[str, bool]:
    """Stability type from the multipliers, plus the area-contracting flag."""
    mods = np.sort(np.abs(np.asarray(multipliers, dtype=complex)))
    if np.all(mods < 1 - tol):
        return "Sink", False
    if np.all(mods > 1 + tol):
        if len(mods) == 2 and mods[1] > (1 + tol) * mods[0]:
            return "ProjHypSource", False
        return "Source", False
    if len(mods) == 2 and mods[0] < 1 - tol and mods[1] > 1 + tol:
        return "Saddle", bool(mods[0] * mods[1] < 1 - tol)
    return "NonHyperbolic", False


@dataclass(frozen=True)
class PeriodicOrbit:
    points: np.ndarray = field(repr=False)   # (p, dim), points[0] is the representative
    multipliers: np.ndarray
    itinerary: tuple[int, ...] = ()

    @property
    def period(self) -> int:
        return len(self.points)

    @property
    def representative(self) -> np.ndarray:
        return self.points[0]

    @property
    def area(self) -> float:
        return float(np.prod(np.abs(self.multipliers)))

    @property
    def classification(self) -> str:
        return classify_multipliers(self.multipliers)[0]

    @property
    def area_contracting(self) -> bool:
        return classify_multipliers(self.multipliers)[1]

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "point": self.representative.tolist(),
            "orbit": self.points.tolist(),
            "multipliers": [[float(m.real), float(m.imag)] for m in self.multipliers],
            "classification": self.classification,
            "area": self.area,
            "area_contracting": self.area_contracting,
            "itinerary": list(self.itinerary),
        }


def classify(orbit: PeriodicOrbit, tol: float = CLASS_TOL) -> str:
    return classify_multipliers(orbit.multipliers, tol)[0]


@dataclass(frozen=True)
class SeedFailure:
    seed: tuple[float, ...]
    reason: str


def orbit_multipliers(system: SystemSpec, a: np.ndarray, points: np.ndarray,
                      itinerary) -> np.ndarray:
    """Eigenvalues of the chain-rule product of Jacobians along the orbit."""
    J = np.eye(system.dim)
    for z, b in zip(points, itinerary):
        J = system.branch_jacobian(z, int(b), a) @ J
    ev = np.linalg.eigvals(J)
    return ev[np.lexsort((ev.imag, -np.abs(ev)))]


def _apply(system, a, z, b):
    return np.array([float(v) for v in system.branch_map(list(z), int(b), a)])


def _itinerary(system, a, z, p):
    itin, pts = [], []
    for _ in range(p):
        b = int(system.branch_index(z[None, :])[0])
        if b < 0:
            return None
        itin.append(b)
        pts.append(z)
        z = _apply(system, a, z, b)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > _BLOWUP:
            return None
    return tuple(itin)


def _newton(system, a, z, itin):
    """Newton on ``f^p(z) - z`` along a fixed itinerary."""
    dim = system.dim
    for _ in range(MAX_NEWTON):
        w = z.copy()
        J = np.eye(dim)
        for b in itin:
            J = system.branch_jacobian(w, b, a) @ J
            w = _apply(system, a, w, b)
        F = w - z
        if not np.all(np.isfinite(F)):
            return None, "diverged"
        if not np.any(F):
            return z, None
        try:
            dz = np.linalg.solve(J - np.eye(dim), -F)
        except np.linalg.LinAlgError:
            return None, "singular Jacobian"
        z = z + dz
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > _BLOWUP:
            return None, "diverged"
        if np.linalg.norm(dz) < STEP_TOL:
            return z, None
    return None, "no convergence"


def _solve_seed(system, a, p, seed):
    seed = np.asarray(seed, dtype=float)
    itin = _itinerary(system, a, seed, p)
    if itin is None:
        return None, "seed orbit leaves the domain"
    z, why = _newton(system, a, seed, itin)
    if z is None:
        return None, why
    pts = [z]
    for b in itin[:-1]:
        pts.append(_apply(system, a, pts[-1], b))
    pts = np.array(pts)
    if not np.all(system.in_box(pts)):
        return None, "orbit outside the phase box"
    if not np.array_equal(system.branch_index(pts), np.array(itin)) or \
            any(system.on_boundary(q) for q in pts):
        return None, "orbit crosses a branch boundary"
    for q in range(1, p):
        if p % q == 0 and np.linalg.norm(pts[q] - pts[0]) < DIVISOR_TOL:
            return None, f"orbit has period {q}"
    # canonical representative: lexicographically smallest point
    start = min(range(p), key=lambda t: tuple(pts[t]))
    pts = np.roll(pts, -start, axis=0)
    itin = itin[start:] + itin[:start]
    return PeriodicOrbit(pts, orbit_multipliers(system, a, pts, itin), itin), None


def _dedup(orbits: list[PeriodicOrbit], tol: float) -> list[PeriodicOrbit]:
    orbits = sorted(orbits, key=lambda o: (o.period, tuple(o.representative)))
    kept: list[PeriodicOrbit] = []
    seen: dict[int, np.ndarray] = {}
    for o in orbits:
        prev = seen.get(o.period)
        if prev is not None and np.min(np.linalg.norm(prev - o.representative, axis=1)) <= tol:
            continue
        kept.append(o)
        seen[o.period] = o.points if prev is None else np.vstack([prev, o.points])
    return kept


def find_periodic(system: SystemSpec, param, p: int, seeds, *, dedup_tol: float = DEDUP_TOL,
                  threads: int = 1, diagnostics: list | None = None) -> list[PeriodicOrbit]:
    """Distinct periodic orbits of exact period ``p`` reached by Newton from ``seeds``.

    Failed seeds are skipped; pass a list as ``diagnostics`` to collect them.
    """
    if p < 1:
        raise UsageError("period must be >= 1")
    a = param_vector(system, param)
    seeds = [np.atleast_1d(np.asarray(getattr(s, "coords", s), dtype=float)) for s in seeds]

    def one(s):
        return _solve_seed(system, a, p, s)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    found = []
    for s, (orb, why) in zip(seeds, results):
        if orb is None:
            if diagnostics is not None:
                diagnostics.append(SeedFailure(tuple(s), why))
        else:
            found.append(orb)
    return _dedup(found, dedup_tol)


def seed_grid(system: SystemSpec, n: int = DEFAULT_GRID, jitter_seed: int | None = None) -> np.ndarray:
    """Cell centres of an ``n^dim`` grid over the phase box, optionally jittered within cells."""
    lo, hi = system.box
    axes = [lo[j] + (np.arange(n) + 0.5) * (hi[j] - lo[j]) / n for j in range(system.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, system.dim)
    if jitter_seed is not None:
        rng = np.random.default_rng(jitter_seed)
        pts = pts + (rng.random(pts.shape) - 0.5) * (hi - lo) / n
    return pts


@dataclass
class SinkCensus:
    system: dict
    param: tuple[float, ...]
    max_period: int
    sinks: list[PeriodicOrbit]
    grid: dict
    dedup_tol: float = DEDUP_TOL

    CSV_HEADER = ("period", "x", "y", "mult1_re", "mult1_im", "mult2_re", "mult2_im",
                  "classification")

    def __len__(self):
        return len(self.sinks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for o in self.sinks:
            z = list(o.representative) + [math.nan] * (2 - len(o.representative))
            m = list(o.multipliers) + [complex(math.nan, math.nan)] * (2 - len(o.multipliers))
            w.writerow([o.period] + [f"{v:.17g}" for v in z]
                       + [f"{v:.17g}" for c in m for v in (c.real, c.imag)] + [o.classification])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"system": self.system, "param": list(self.param), "max_period": self.max_period,
                "grid": self.grid, "dedup_tol": self.dedup_tol,
                "sinks": [o.to_dict() for o in self.sinks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def sink_census(system: SystemSpec, param=None, max_period: int = 1, *, grid: int = DEFAULT_GRID,
                jitter_seed: int | None = None, dedup_tol: float = DEDUP_TOL,
                threads: int = 1) -> SinkCensus:
    """All distinct sinks of period ``<= max_period`` found from a seed grid."""
    if max_period < 1:
        raise UsageError("max_period must be >= 1")
    a = param_vector(system, param)
    seeds = seed_grid(system, grid, jitter_seed)
    sinks: list[PeriodicOrbit] = []
    for p in range(1, max_period + 1):
        orbits = find_periodic(system, a, p, seeds, dedup_tol=dedup_tol, threads=threads)
        sinks.extend(o for o in orbits if o.classification == "Sink")
    sinks = _dedup(sinks, dedup_tol)
    return SinkCensus(system.to_dict(), tuple(float(v) for v in a), max_period, sinks,
                      {"points_per_axis": grid, "jitter_seed": jitter_seed}, dedup_tol)


@dataclass(frozen=True)
class BasinEstimate:
    fraction: float
    std_error: float
    samples: int
    limit: DiscreteMeasure


def basin_measure_estimate(system: SystemSpec, param, sink: PeriodicOrbit, samples: int = 2000,
                           n: int = 100, *, seed: int = 0, radius: float = DEDUP_TOL) -> BasinEstimate:
    """Fraction of uniform initial points entering the ``radius``-neighbourhood of ``sink``
    within ``n`` steps; the limit measure is uniform on the sink's orbit."""
    if sink.classification != "Sink":
        raise UsageError(f"basin estimate needs a sink, got {sink.classification}")
    if samples < 1 or n < 1:
        raise UsageError("samples and n must be positive")
    a = param_vector(system, param)
    lo, hi = system.box
    X = lo + np.random.default_rng(seed).random((samples, system.dim)) * (hi - lo)
    hit = np.zeros(samples, dtype=bool)
    for block, esc in system.iterate(X, a, n):
        d = np.linalg.norm(block[:, :, None, :] - sink.points[None, None, :, :], axis=-1)
        hit |= np.any((d.min(axis=2) < radius) & ~esc, axis=1)
    frac = float(hit.mean())
    se = math.sqrt(frac * (1 - frac) / samples)
    return BasinEstimate(frac, se, samples, DiscreteMeasure.uniform(sink.points))
