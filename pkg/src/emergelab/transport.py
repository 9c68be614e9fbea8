"""Finitely supported probability measures and the Wasserstein-1 distance.

The distance uses test functions that are 1-Lipschitz with values in
[-1, 1].  By Kantorovich duality that is optimal transport with ground cost
``min(d, 2)``, which :func:`w1` solves exactly by the network simplex.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import _kernels
from .systems import SystemSpec, Trajectory, UsageError

__all__ = [
    "DiscreteMeasure", "GroundMetric", "EscapeError", "empirical_from_trajectory",
    "empirical_from_points", "w1", "w1_line_closedform", "quantize", "pairwise_w1",
]

WEIGHT_TOL = 1e-12


class EscapeError(ValueError):
    def __init__(self, escape_time: int):
        super().__init__(f"trajectory escaped at step {escape_time}")
        self.escape_time = escape_time


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Atoms (rows of ``atoms``) with nonnegative weights summing to 1.

    Atoms with identical coordinates are merged and sorted
    lexicographically, so equal measures have equal representations.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(atoms) == 0:
            raise UsageError("empty measure")
        if len(atoms) != len(w):
            raise UsageError("atoms and weights differ in length")
        if not np.all(np.isfinite(atoms)) or not np.all(np.isfinite(w)):
            raise UsageError("non-finite atom or weight")
        if np.any(w < 0):
            raise UsageError("negative weight")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise UsageError(f"weights sum to {w.sum()!r}, not 1")
        uniq, inv = np.unique(atoms, axis=0, return_inverse=True)
        merged = np.bincount(inv.reshape(-1), weights=w, minlength=len(uniq))
        keep = merged > 0
        uniq, merged = uniq[keep], merged[keep]
        uniq.setflags(write=False)
        merged.setflags(write=False)
        object.__setattr__(self, "atoms", uniq)
        object.__setattr__(self, "weights", merged)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return len(self.weights)

    def __eq__(self, other):
        return (isinstance(other, DiscreteMeasure)
                and self.atoms.shape == other.atoms.shape
                and np.array_equal(self.atoms, other.atoms)
                and np.array_equal(self.weights, other.weights))

    @classmethod
    def dirac(cls, x) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(x, dtype=float)), np.ones(1))

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    # -- serialisation ---------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(self.dim)] + ["weight"])
        for row, wt in zip(self.atoms, self.weights):
            writer.writerow([f"{v:.17g}" for v in row] + [f"{wt:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        return cls(data[:, :-1], data[:, -1])

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "DiscreteMeasure":
        return cls(np.array(doc["atoms"], dtype=float), np.array(doc["weights"], dtype=float))

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GroundMetric:
    """Euclidean distance times ``scale``, truncated at ``cap``."""

    scale: float = 1.0
    cap: float = 2.0

    @classmethod
    def for_system(cls, system: SystemSpec) -> "GroundMetric":
        return cls(scale=system.metric_normalizer)

    def cost(self, X, Y) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        Y = np.asarray(Y, dtype=float).reshape(len(Y), -1)
        return np.minimum(self.scale * cdist(X, Y), self.cap)


def empirical_from_points(points: np.ndarray) -> DiscreteMeasure:
    """Uniform measure on ``points``; repeated points get weight ``count / n`` exactly."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    uniq, counts = np.unique(pts, axis=0, return_counts=True)
    return DiscreteMeasure(uniq, counts / len(pts))


def empirical_from_trajectory(t: Trajectory, n: int | None = None) -> DiscreteMeasure:
    """Uniform measure on the first ``n`` points (default: all) of ``t``."""
    n = len(t) if n is None else n
    if n < 1 or n > len(t):
        raise UsageError(f"need 1 <= n <= {len(t)}")
    hit = np.flatnonzero(t.escaped[:n])
    if len(hit):
        raise EscapeError(int(hit[0]))
    return empirical_from_points(t.coords[:n])


def w1(mu: DiscreteMeasure, nu: DiscreteMeasure, g: GroundMetric = GroundMetric()) -> float:
    if len(mu) == 0 or len(nu) == 0:
        raise UsageError("empty measure")
    if mu.dim != nu.dim:
        raise UsageError("measures live in different dimensions")
    if mu.dim == 1 and _line_uncapped([mu, nu], g):
        return w1_line_closedform(mu, nu, g)
    C = g.cost(mu.atoms, nu.atoms)
    if len(mu) == 1 or len(nu) == 1:
        return float(np.dot(nu.weights, C[0]) if len(mu) == 1 else np.dot(mu.weights, C[:, 0]))
    cost, *_ = _kernels.transport(mu.weights, nu.weights, C)
    return max(cost, 0.0)


def w1_line_closedform(mu: DiscreteMeasure, nu: DiscreteMeasure,
                       g: GroundMetric = GroundMetric()) -> float:
    """W1 on the line from the monotone (quantile) coupling.

    Each leg of the coupling is charged ``min(scale * |x - y|, cap)``; when
    no leg exceeds the cap this equals the integral of ``|F_mu - F_nu|``.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise UsageError("closed form needs one-dimensional atoms")
    xa, wa = mu.atoms[:, 0], mu.weights
    xb, wb = nu.atoms[:, 0], nu.weights
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    ts = np.union1d(ca, cb)
    t0 = np.concatenate([[0.0], ts[:-1]])
    mass = ts - t0
    ia = np.minimum(np.searchsorted(ca, ts, side="left"), len(ca) - 1)
    ib = np.minimum(np.searchsorted(cb, ts, side="left"), len(cb) - 1)
    legs = np.minimum(g.scale * np.abs(xa[ia] - xb[ib]), g.cap)
    return float(np.dot(mass, legs))


def quantize(mu: DiscreteMeasure, cell: float, origin=None) -> DiscreteMeasure:
    """Move every atom to the centre of its grid cell of side ``cell``."""
    if not cell > 0:
        raise UsageError("cell must be positive")
    origin = np.zeros(mu.dim) if origin is None else np.asarray(origin, dtype=float)
    idx = np.floor((mu.atoms - origin) / cell)
    return DiscreteMeasure(origin + (idx + 0.5) * cell, np.asarray(mu.weights))


def _line_uncapped(measures, g: GroundMetric) -> bool:
    """True when no pair of atoms is far enough apart for the cap to bite."""
    lo = min(m.atoms[0, 0] for m in measures)
    hi = max(m.atoms[-1, 0] for m in measures)
    return g.scale * (hi - lo) <= g.cap


def _line_matrix(measures: list[DiscreteMeasure], g: GroundMetric) -> np.ndarray:
    grid = np.unique(np.concatenate([m.atoms[:, 0] for m in measures]))
    if len(grid) == 1:
        return np.zeros((len(measures), len(measures)))
    F = np.zeros((len(measures), len(grid)))
    for s, m in enumerate(measures):
        pos = np.searchsorted(grid, m.atoms[:, 0])
        np.add.at(F[s], pos, m.weights)
    F = np.cumsum(F, axis=1)[:, :-1] * np.diff(grid)[None, :]
    return g.scale * cdist(F, F, metric="cityblock")


def pairwise_w1(measures: list[DiscreteMeasure], g: GroundMetric = GroundMetric(),
                threads: int = 1) -> np.ndarray:
    """Symmetric matrix of W1 distances between all measures.

    Fast exact paths: all-Dirac clouds use the ground cost directly, and
    one-dimensional clouds whose spread cannot reach the cap use the CDF
    formula on the common support.  Everything else goes through
    :func:`w1`, optionally on a thread pool (entries are independent, so the
    result does not depend on scheduling).
    """
    S = len(measures)
    if S == 0:
        raise UsageError("no measures")
    if all(len(m) == 1 for m in measures):
        X = np.concatenate([m.atoms for m in measures])
        return g.cost(X, X)
    if all(m.dim == 1 for m in measures) and _line_uncapped(measures, g):
        total = sum(len(m) for m in measures)
        if S * min(total, 10**6) <= 5 * 10**7:
            D = _line_matrix(measures, g)
            np.fill_diagonal(D, 0.0)
            return D
    D = np.zeros((S, S))
    pairs = [(i, j) for i in range(S) for j in range(i + 1, S)]

    def one(ij):
        return w1(measures[ij[0]], measures[ij[1]], g)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(one, pairs, chunksize=64))
    else:
        vals = [one(p) for p in pairs]
    for (i, j), v in zip(pairs, vals):
        D[i, j] = D[j, i] = v
    return D
