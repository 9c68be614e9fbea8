"""Built-in dynamical systems, orbits, Jacobians and inverse branches.

Every system is a piecewise map of a box in R^1 or R^2.  A *branch* is an
integer label for one smooth piece; smooth systems have the single branch 0.
The branch formulas are written with plain arithmetic so the same code runs
on floats, numpy arrays and truncated Taylor polynomials (see ``jets``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np

from .multiindex import MultiIndexSet

__all__ = [
    "DynamicsError", "UsageError", "SingularLocusError", "NoPreimageError",
    "PhasePoint", "ParamPoint", "Trajectory", "SystemSpec",
    "Henon", "Identity", "Rotation", "Doubling", "ParablenderCore",
    "ParablenderFull", "PlantedSinks", "CATALOGUE",
    "step", "orbit", "jacobian", "inverse_branch", "system_from_dict",
]


class DynamicsError(Exception):
    pass


class UsageError(DynamicsError, ValueError):
    pass


class SingularLocusError(DynamicsError):
    """The point sits on a branch boundary where the map is not differentiable."""


class NoPreimageError(DynamicsError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    coords: tuple[float, ...]
    escaped: bool = False

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.coords))
        if not all(math.isfinite(v) for v in c):
            raise UsageError(f"non-finite coordinates {c}")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


@dataclass(frozen=True)
class ParamPoint:
    a: tuple[float, ...] = ()

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(np.asarray(self.a, dtype=float)))
        if any(not (-1.0 <= v <= 1.0) for v in a):
            raise UsageError(f"parameter {a} outside [-1, 1]^k")
        object.__setattr__(self, "a", a)

    @property
    def k(self) -> int:
        return len(self.a)


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------

class SystemSpec:
    """Base class of the catalogue. Subclasses are frozen dataclasses."""

    kind: ClassVar[str] = ""
    dim: int = 1
    k: int = 0

    # -- geometry ----------------------------------------------------------
    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def metric_normalizer(self) -> float:
        lo, hi = self.box
        return min(1.0, 2.0 / float(np.linalg.norm(hi - lo)))

    def in_box(self, X: np.ndarray) -> np.ndarray:
        lo, hi = self.box
        return np.all((X >= lo) & (X <= hi), axis=-1)

    # -- branches ----------------------------------------------------------
    @property
    def n_branches(self) -> int:
        return 1

    def branch_index(self, X: np.ndarray) -> np.ndarray:
        """Branch label per row of ``X``; -1 outside the definition domain."""
        return np.zeros(len(X), dtype=np.int64)

    def branch_name(self, b: int) -> str:
        return str(b)

    def branch_map(self, coords: list, b: int, a) -> list:
        raise NotImplementedError

    def branch_jacobian(self, z: np.ndarray, b: int, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def branch_inverse(self, z: np.ndarray, b: int, a: np.ndarray) -> np.ndarray:
        raise UsageError(f"{self.kind} has no inverse branches")

    def on_boundary(self, z: np.ndarray, tol: float = 1e-12) -> bool:
        return False

    # -- vectorised stepping --------------------------------------------
    def step_array(self, X: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map every row of ``X``; returns images and an escape mask."""
        X = np.asarray(X, dtype=float)
        b = self.branch_index(X)
        Y = X.copy()
        for br in np.unique(b):
            if br < 0:
                continue
            rows = b == br
            cols = [X[rows, j] for j in range(self.dim)]
            out = self.branch_map(cols, int(br), a)
            for j in range(self.dim):
                Y[rows, j] = out[j]
        with np.errstate(invalid="ignore"):
            ok = (b >= 0) & np.all(np.isfinite(Y), axis=1) & self.in_box(Y)
        Y[~ok] = X[~ok]
        return Y, ~ok

    def iterate(self, X0: np.ndarray, a: np.ndarray, n: int, chunk: int = 4096):
        """Yield ``(block, escaped)`` chunks of the orbits of all rows of ``X0``.

        ``block`` has shape ``(S, m, dim)`` and holds iterates ``f^t`` for
        consecutive ``t`` starting at 0.  An escaped orbit repeats its last
        in-box point; ``escaped[s, t]`` flags the sentinel entries.
        """
        X = np.array(X0, dtype=float).reshape(-1, self.dim)
        esc = ~self.in_box(X)
        done = 0
        while done < n:
            m = min(chunk, n - done)
            block = np.empty((len(X), m, self.dim))
            eblock = np.empty((len(X), m), dtype=bool)
            for t in range(m):
                block[:, t] = X
                eblock[:, t] = esc
                if done + t + 1 < n:
                    Y, e = self.step_array(X, a)
                    e |= esc
                    X = np.where(e[:, None], X, Y)
                    esc = e
            done += m
            yield block, eblock

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        raise NotImplementedError

    def label(self) -> str:
        args = ",".join(f"{k}={v}" for k, v in self.to_dict().items()
                        if k != "kind" and not isinstance(v, (list, dict)))
        return f"{self.kind}({args})"


def _unit_box(dim):
    return np.zeros(dim), np.ones(dim)


@dataclass(frozen=True)
class Henon(SystemSpec):
    a: float = 1.4
    b: float = 0.3
    kind: ClassVar[str] = "Henon"
    dim: ClassVar[int] = 2
    k: ClassVar[int] = 0

    @property
    def box(self):
        return np.full(2, -4.0), np.full(2, 4.0)

    def branch_map(self, coords, b, a):
        x, y = coords
        return [x * x + self.a + y, -self.b * x]

    def branch_jacobian(self, z, b, a):
        return np.array([[2.0 * z[0], 1.0], [-self.b, 0.0]])

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Identity(SystemSpec):
    dim: int = 1
    kind: ClassVar[str] = "Identity"
    k: ClassVar[int] = 0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise UsageError("Identity dim must be 1 or 2")

    @property
    def box(self):
        return _unit_box(self.dim)

    def branch_map(self, coords, b, a):
        return list(coords)

    def branch_jacobian(self, z, b, a):
        return np.eye(self.dim)

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class Rotation(SystemSpec):
    """Circle rotation; with ``dim=2`` the cylinder map ``(x + alpha, y)``."""

    alpha: float = math.sqrt(2.0) - 1.0
    dim: int = 1
    kind: ClassVar[str] = "Rotation"
    k: ClassVar[int] = 0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise UsageError("Rotation dim must be 1 or 2")

    @property
    def box(self):
        return _unit_box(self.dim)

    def branch_map(self, coords, b, a):
        return [(coords[0] + self.alpha) % 1.0, *coords[1:]]

    def branch_jacobian(self, z, b, a):
        return np.eye(self.dim)

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "dim": self.dim}


@dataclass(frozen=True)
class Doubling(SystemSpec):
    """``x -> 2x mod 1``.

    Floating-point doubling shifts mantissa bits out and reaches 0 after ~53
    steps, so :meth:`iterate` runs the orbit exactly on the rational point
    ``p / MODULUS`` nearest the start.  ``MODULUS`` is a prime with 2 as a
    primitive root, so such orbits have period ``MODULUS - 1``.
    """

    kind: ClassVar[str] = "Doubling"
    dim: ClassVar[int] = 1
    k: ClassVar[int] = 0
    MODULUS: ClassVar[int] = 1729382256910270363

    @property
    def box(self):
        return _unit_box(1)

    @property
    def n_branches(self):
        return 2

    def branch_index(self, X):
        return np.clip(np.floor(2.0 * X[:, 0]), 0, 1).astype(np.int64)

    def branch_map(self, coords, b, a):
        return [2.0 * coords[0] - b]

    def branch_jacobian(self, z, b, a):
        return np.array([[2.0]])

    def on_boundary(self, z, tol=1e-12):
        return abs(z[0] - 0.5) < tol

    def iterate(self, X0, a, n, chunk=4096):
        q = self.MODULUS
        X0 = np.asarray(X0, dtype=float).reshape(-1)
        p = np.array([int(round(float(x) * q)) % q for x in X0], dtype=np.uint64)
        qq = np.uint64(q)
        done = 0
        while done < n:
            m = min(chunk, n - done)
            block = np.empty((len(p), m, 1))
            for t in range(m):
                block[:, t, 0] = p.astype(np.float64) / float(q)
                p = (p * np.uint64(2)) % qq
            done += m
            yield block, np.zeros((len(p), m), dtype=bool)

    def to_dict(self):
        return {"kind": self.kind}


def _core_centers(n: int, lo: float, hi: float) -> np.ndarray:
    half = n // 2
    pitch = (hi - lo) / half
    pos = lo + (np.arange(half) + 0.5) * pitch
    return np.concatenate([-pos[::-1], pos])


@dataclass(frozen=True)
class ParablenderCore(SystemSpec):
    """Affine blender family on ``D x [-3, 3]`` with one branch per symbol.

    On the interval ``I_delta`` the map is
    ``(Q(x), c*y + sum_i delta(i) a^i)`` with ``Q`` the increasing affine
    bijection of ``I_delta`` onto ``[-1, 1]`` and ``c`` the contraction
    (2/3 by default).
    """

    d: int = 1
    k: int = 1
    contraction: float = 2.0 / 3.0
    kind: ClassVar[str] = "ParablenderCore"
    dim: ClassVar[int] = 2
    _inner: ClassVar[float] = 0.01

    def __post_init__(self):
        if self.k < 1:
            raise UsageError("parablender needs at least one parameter")
        E = MultiIndexSet(self.d, self.k)
        if len(E) > 12:
            raise UsageError(f"|E| = {len(E)} > 12: too many branches to enumerate")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "deltas", E.symbols())
        n = len(self.deltas)
        length = 1.0 / (2 * n + 2)
        centers = _core_centers(n, self._inner, 0.5)
        object.__setattr__(self, "lengths", np.full(n, length))
        object.__setattr__(self, "centers", centers)

    @property
    def box(self):
        return np.array([-1.0, -4.0]), np.array([1.0, 4.0])

    @property
    def n_branches(self):
        return len(self.centers)

    @property
    def intervals(self) -> np.ndarray:
        return np.stack([self.centers - self.lengths / 2, self.centers + self.lengths / 2], axis=1)

    def slope(self, b: int) -> float:
        return 2.0 / self.lengths[b]

    def branch_index(self, X):
        iv = self.intervals
        x = X[:, 0]
        j = np.searchsorted(iv[:, 0], x, side="right") - 1
        jj = np.clip(j, 0, len(iv) - 1)
        ok = (j >= 0) & (x <= iv[jj, 1])
        return np.where(ok, jj, -1).astype(np.int64)

    def branch_name(self, b):
        if b < len(self.deltas):
            return "delta" + "".join("+" if s > 0 else "-" for s in self.deltas[b])
        return str(b)

    def branch_of_symbol(self, delta: Sequence[int]) -> int:
        return self.deltas.index(tuple(int(s) for s in delta))

    def offset(self, b: int, a):
        """``sum_i delta_b(i) a^i``; ``a`` may hold floats or Taylor polynomials."""
        total = 0.0
        for s, i in zip(self.deltas[b], self.E):
            term = 1.0
            for aj, ij in zip(a, i):
                for _ in range(ij):
                    term = term * aj
            total = total + s * term
        return total

    def branch_map(self, coords, b, a):
        x, y = coords
        c, q = self.centers[b], self.slope(b)
        return [q * (x - c), self.contraction * y + self.offset(b, a)]

    def branch_jacobian(self, z, b, a):
        return np.diag([self.slope(b), self.contraction])

    def branch_inverse(self, z, b, a):
        u, v = float(z[0]), float(z[1])
        if not -1.0 <= u <= 1.0:
            raise NoPreimageError(f"x={u} outside the image [-1, 1] of branch {b}")
        x = self.centers[b] + u / self.slope(b)
        y = (v - self.offset(b, a)) / self.contraction
        return np.array([x, y])

    def on_boundary(self, z, tol=1e-12):
        iv = self.intervals
        return bool(np.any(np.abs(iv - z[0]) < tol))

    def to_dict(self):
        out = {"kind": self.kind, "d": self.d, "k": self.k}
        if self.contraction != 2.0 / 3.0:
            out["contraction"] = self.contraction
        out["intervals"] = self.intervals.tolist()
        return out


@dataclass(frozen=True)
class ParablenderFull(ParablenderCore):
    """Core blender plus a projectively hyperbolic source, a saddle and a fold.

    Extra branches, after the ``2^|E|`` core ones:
    ``S`` on ``I_S`` (centred at 0), ``P`` on ``I_P`` and ``P'`` on ``I_P'``.
    Only the restriction to the definition rectangles is implemented;
    leaving them counts as escape.
    """

    kind: ClassVar[str] = "ParablenderFull"
    _inner: ClassVar[float] = 1.0 / 16.0
    IS_LENGTH: ClassVar[float] = 1.0 / 16.0
    IP: ClassVar[tuple[float, float]] = (0.6, 0.7)
    IPP: ClassVar[tuple[float, float]] = (0.8, 0.9)

    def __post_init__(self):
        super().__post_init__()
        n = len(self.deltas)
        lengths = np.concatenate([
            self.lengths,
            [self.IS_LENGTH, self.IP[1] - self.IP[0], self.IPP[1] - self.IPP[0]],
        ])
        centers = np.concatenate([
            self.centers, [0.0, sum(self.IP) / 2, sum(self.IPP) / 2]
        ])
        # branch ids: core first, then S, P, P'; lookups go through the sorted order
        order = np.argsort(centers, kind="stable")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "S", n)
        object.__setattr__(self, "P", n + 1)
        object.__setattr__(self, "PP", n + 2)
        qP = self.slope(self.P)
        x_P = qP * centers[self.P] / (qP - 1.0)
        object.__setattr__(self, "x_S", 0.0)
        object.__setattr__(self, "x_P", x_P)
        object.__setattr__(self, "x_PP", centers[self.PP] + x_P / self.slope(self.PP))

    def branch_index(self, X):
        iv = self.intervals[self._order]
        x = X[:, 0]
        j = np.searchsorted(iv[:, 0], x, side="right") - 1
        jj = np.clip(j, 0, len(iv) - 1)
        ok = (j >= 0) & (x <= iv[jj, 1])
        return np.where(ok, self._order[jj], -1).astype(np.int64)

    def branch_name(self, b):
        return {self.S: "S", self.P: "P", self.PP: "P'"}.get(b) or super().branch_name(b)

    def resolve_branch(self, branch) -> int:
        if isinstance(branch, str):
            names = {"S": self.S, "P": self.P, "P'": self.PP}
            if branch not in names:
                raise UsageError(f"unknown branch {branch!r}")
            return names[branch]
        if isinstance(branch, (tuple, list)):
            return self.branch_of_symbol(branch)
        return int(branch)

    def branch_map(self, coords, b, a):
        if b < self.S:
            return super().branch_map(coords, b, a)
        x, y = coords
        q, c = self.slope(b), self.centers[b]
        if b == self.S:
            return [q * (x - c), y / math.sqrt(self.IS_LENGTH)]
        if b == self.P:
            return [q * (x - c), self.lengths[self.P] ** 2 * y]
        dx = x - self.x_PP
        return [y - dx * dx + self.x_P, self.x_PP - x]

    def branch_jacobian(self, z, b, a):
        if b < self.S:
            return super().branch_jacobian(z, b, a)
        if b == self.S:
            return np.diag([self.slope(b), 1.0 / math.sqrt(self.IS_LENGTH)])
        if b == self.P:
            return np.diag([self.slope(b), self.lengths[self.P] ** 2])
        return np.array([[-2.0 * (z[0] - self.x_PP), 1.0], [-1.0, 0.0]])

    def branch_inverse(self, z, b, a):
        if b < self.S:
            return super().branch_inverse(z, b, a)
        u, v = float(z[0]), float(z[1])
        if b == self.PP:
            x = self.x_PP - v
            lo, hi = self.intervals[b]
            if not lo <= x <= hi:
                raise NoPreimageError(f"no preimage of {z} in I_P'")
            return np.array([x, u + v * v - self.x_P])
        if not -1.0 <= u <= 1.0:
            raise NoPreimageError(f"x={u} outside the image [-1, 1] of branch {b}")
        x = self.centers[b] + u / self.slope(b)
        scale = 1.0 / math.sqrt(self.IS_LENGTH) if b == self.S else self.lengths[self.P] ** 2
        return np.array([x, v / scale])

    def to_dict(self):
        out = super().to_dict()
        out["I_S_length"] = self.IS_LENGTH
        return out


@dataclass(frozen=True)
class PlantedSinks(SystemSpec):
    """Test fixture: the unit square tiled by ``N`` equal cells, each
    contracted affinely (ratio ``rate``) onto its own centre."""

    N: int = 4
    rate: float = 0.5
    kind: ClassVar[str] = "PlantedSinks"
    dim: ClassVar[int] = 2
    k: ClassVar[int] = 0

    def __post_init__(self):
        if self.N < 1:
            raise UsageError("PlantedSinks needs N >= 1")
        rows = max(r for r in range(1, int(math.isqrt(self.N)) + 1) if self.N % r == 0)
        object.__setattr__(self, "grid", (self.N // rows, rows))

    @property
    def box(self):
        return _unit_box(2)

    @property
    def n_branches(self):
        return self.N

    @property
    def sink_points(self) -> np.ndarray:
        cols, rows = self.grid
        b = np.arange(self.N)
        return np.stack([((b % cols) + 0.5) / cols, ((b // cols) + 0.5) / rows], axis=1)

    def branch_index(self, X):
        cols, rows = self.grid
        i = np.clip(np.floor(X[:, 0] * cols), 0, cols - 1)
        j = np.clip(np.floor(X[:, 1] * rows), 0, rows - 1)
        return (j * cols + i).astype(np.int64)

    def branch_map(self, coords, b, a):
        p = self.sink_points[b]
        return [p[j] + self.rate * (coords[j] - p[j]) for j in range(2)]

    def branch_jacobian(self, z, b, a):
        return self.rate * np.eye(2)

    def on_boundary(self, z, tol=1e-12):
        cols, rows = self.grid
        fx, fy = z[0] * cols, z[1] * rows
        return (abs(fx - round(fx)) < tol and 0 < round(fx) < cols) or \
            (abs(fy - round(fy)) < tol and 0 < round(fy) < rows)

    def to_dict(self):
        return {"kind": self.kind, "N": self.N}


CATALOGUE: dict[str, type[SystemSpec]] = {
    cls.kind: cls
    for cls in (Henon, Identity, Rotation, Doubling, ParablenderCore, ParablenderFull, PlantedSinks)
}


def system_from_dict(doc: dict) -> SystemSpec:
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in CATALOGUE:
        raise UsageError(f"unknown system kind {kind!r}")
    for derived in ("intervals", "I_S_length"):
        doc.pop(derived, None)
    try:
        return CATALOGUE[kind](**doc)
    except TypeError as exc:
        raise UsageError(f"bad fields for {kind}: {exc}") from None


# ---------------------------------------------------------------------------
# point-wise API
# ---------------------------------------------------------------------------

def param_vector(system: SystemSpec, param: ParamPoint | Sequence[float] | None) -> np.ndarray:
    if param is None:
        param = ParamPoint(tuple([0.0] * system.k))
    elif not isinstance(param, ParamPoint):
        param = ParamPoint(tuple(param))
    if param.k != system.k:
        raise UsageError(f"{system.kind} takes {system.k} parameters, got {param.k}")
    return np.asarray(param.a, dtype=float)


def _point(system: SystemSpec, z) -> PhasePoint:
    if not isinstance(z, PhasePoint):
        z = PhasePoint(tuple(np.atleast_1d(z)))
    if z.dim != system.dim:
        raise UsageError(f"{system.kind} lives in dimension {system.dim}, got {z.dim}")
    return z


def step(system: SystemSpec, param, z) -> PhasePoint:
    a = param_vector(system, param)
    z = _point(system, z)
    if z.escaped:
        raise UsageError("cannot step an escaped point")
    Y, esc = system.step_array(np.array([z.coords]), a)
    return PhasePoint(tuple(Y[0]), bool(esc[0]))


@dataclass(frozen=True)
class Trajectory:
    start: PhasePoint
    coords: np.ndarray = field(repr=False)
    escaped: np.ndarray = field(repr=False)
    param: ParamPoint = ParamPoint()

    @property
    def points(self) -> list[PhasePoint]:
        return [PhasePoint(tuple(c), bool(e)) for c, e in zip(self.coords, self.escaped)]

    @property
    def escape_time(self) -> int | None:
        hit = np.flatnonzero(self.escaped)
        return int(hit[0]) if len(hit) else None

    def __len__(self):
        return len(self.coords)


def orbit(system: SystemSpec, param, z0, n: int) -> Trajectory:
    if n < 1:
        raise UsageError("orbit length must be >= 1")
    a = param_vector(system, param)
    z0 = _point(system, z0)
    blocks = list(system.iterate(np.array([z0.coords]), a, n))
    coords = np.concatenate([b[0] for b, _ in blocks], axis=0)
    esc = np.concatenate([e[0] for _, e in blocks])
    if z0.escaped:
        esc[:] = True
    return Trajectory(z0, coords, esc, ParamPoint(tuple(a)))


def jacobian(system: SystemSpec, param, z) -> np.ndarray:
    a = param_vector(system, param)
    z = _point(system, z)
    zz = np.array(z.coords)
    b = int(system.branch_index(zz[None, :])[0])
    if z.escaped or b < 0:
        raise UsageError(f"{z} is outside the definition domain")
    if system.on_boundary(zz):
        raise SingularLocusError(f"{z} lies on a branch boundary of {system.kind}")
    return system.branch_jacobian(zz, b, a)


def inverse_branch(system: SystemSpec, param, z, branch) -> PhasePoint:
    if not isinstance(system, ParablenderCore):
        raise UsageError(f"{system.kind} has no inverse branches")
    a = param_vector(system, param)
    z = _point(system, z)
    if isinstance(system, ParablenderFull):
        b = system.resolve_branch(branch)
    elif isinstance(branch, (tuple, list)):
        b = system.branch_of_symbol(branch)
    else:
        b = int(branch)
    if not 0 <= b < system.n_branches:
        raise UsageError(f"no branch {branch!r}")
    return PhasePoint(tuple(system.branch_inverse(np.array(z.coords), b, a)))
