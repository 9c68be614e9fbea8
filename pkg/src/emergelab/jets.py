"""C^d jets of parameter families and the parablender covering certificate.

A jet at ``a0`` of a family ``(x_a, y_a)`` is stored as the coefficients of
its Taylor polynomial in ``h = a - a0`` over the multi-index set
``E = {i : |i| <= d}``.  Pushing a jet forward evaluates the branch formula
of the family in truncated polynomial arithmetic, so any system whose branch
maps are polynomial in ``(x, y, a)`` is supported.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .interval import Interval
from .multiindex import MultiIndexSet
from .systems import ParablenderCore, ParablenderFull, SystemSpec, UsageError, param_vector

__all__ = [
    "MultiIndexSet", "TruncatedPoly", "Jet", "JetBox", "AffineJetMap", "CoverCertificate",
    "OutOfDomainError", "jet_pushforward", "jet_branch_inverse_map", "branch_layout",
    "verify_covered_domain", "invariant_box", "cover_constant_jet", "fixed_jet",
]

CRITICAL_CONTRACTION = Fraction(2, 3)


class OutOfDomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# truncated multivariate polynomials
# ---------------------------------------------------------------------------

_MUL_TABLES: dict[tuple[int, int], list[tuple[int, int, int]]] = {}


def _mul_table(E: MultiIndexSet):
    key = (E.d, E.k)
    if key not in _MUL_TABLES:
        pos = {i: p for p, i in enumerate(E)}
        table = []
        for p, i in enumerate(E):
            for q, j in enumerate(E):
                s = tuple(u + v for u, v in zip(i, j))
                if s in pos:
                    table.append((p, q, pos[s]))
        _MUL_TABLES[key] = table
    return _MUL_TABLES[key]


class TruncatedPoly:
    """Polynomial in ``h`` (k variables) truncated to total degree ``d``."""

    __array_ufunc__ = None  # make numpy scalars defer to our reflected operators

    def __init__(self, E: MultiIndexSet, coeffs=None):
        self.E = E
        c = np.zeros(len(E)) if coeffs is None else np.array(coeffs, dtype=float)
        if c.shape != (len(E),):
            raise UsageError(f"expected {len(E)} coefficients, got shape {c.shape}")
        self.c = c

    @classmethod
    def const(cls, E, value) -> "TruncatedPoly":
        p = cls(E)
        p.c[0] = value
        return p

    @classmethod
    def variable(cls, E, j: int, at: float = 0.0) -> "TruncatedPoly":
        """The coordinate ``a_j = at + h_j``."""
        p = cls.const(E, at)
        if E.d >= 1:
            unit = tuple(1 if t == j else 0 for t in range(E.k))
            p.c[E.position(unit)] = 1.0
        return p

    def _lift(self, other):
        if isinstance(other, TruncatedPoly):
            return other
        return TruncatedPoly.const(self.E, float(other))

    def __add__(self, other):
        return TruncatedPoly(self.E, self.c + self._lift(other).c)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedPoly(self.E, -self.c)

    def __sub__(self, other):
        return TruncatedPoly(self.E, self.c - self._lift(other).c)

    def __rsub__(self, other):
        return TruncatedPoly(self.E, self._lift(other).c - self.c)

    def __mul__(self, other):
        if not isinstance(other, TruncatedPoly):
            return TruncatedPoly(self.E, self.c * float(other))
        out = np.zeros(len(self.E))
        for p, q, r in _mul_table(self.E):
            out[r] += self.c[p] * other.c[q]
        return TruncatedPoly(self.E, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, TruncatedPoly):
            raise TypeError("division by a polynomial is not supported")
        return TruncatedPoly(self.E, self.c / float(other))

    def __call__(self, h) -> float:
        h = np.asarray(h, dtype=float).reshape(self.E.k)
        return float(sum(c * np.prod(h ** np.array(i, dtype=float)) for c, i in zip(self.c, self.E)))

    def __repr__(self):
        return f"TruncatedPoly({self.c.tolist()})"


# ---------------------------------------------------------------------------
# jets and boxes
# ---------------------------------------------------------------------------

@dataclass
class Jet:
    """Coefficients ``(x_i, y_i)`` of ``sum_i (x_i, y_i) h^i`` over E."""

    E: MultiIndexSet
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float).reshape(len(self.E))
        self.y = np.array(self.y, dtype=float).reshape(len(self.E))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise UsageError("non-finite jet coefficient")

    @classmethod
    def zero(cls, d: int, k: int) -> "Jet":
        E = MultiIndexSet(d, k)
        return cls(E, np.zeros(len(E)), np.zeros(len(E)))

    @classmethod
    def constant(cls, d: int, k: int, point) -> "Jet":
        j = cls.zero(d, k)
        j.x[0], j.y[0] = point
        return j

    def evaluate(self, h) -> np.ndarray:
        return np.array([TruncatedPoly(self.E, self.x)(h), TruncatedPoly(self.E, self.y)(h)])

    def to_dict(self) -> dict:
        return {"d": self.E.d, "k": self.E.k, "indices": [list(i) for i in self.E],
                "x": self.x.tolist(), "y": self.y.tolist()}


@dataclass
class JetBox:
    """Interval enclosure ``x_i in X[i]``, ``y_i in Y[i]`` for every index."""

    E: MultiIndexSet
    X: list[Interval]
    Y: list[Interval]

    @classmethod
    def uniform(cls, E: MultiIndexSet, x_bound: float, y_bound: float) -> "JetBox":
        return cls(E, [Interval(-x_bound, x_bound) for _ in E],
                   [Interval(-y_bound, y_bound) for _ in E])

    def contains_box(self, other: "JetBox") -> bool:
        return all(o.subset(s) for o, s in zip(other.X + other.Y, self.X + self.Y))

    def contains(self, jet: Jet) -> bool:
        return (all(v in iv for v, iv in zip(jet.x, self.X))
                and all(v in iv for v, iv in zip(jet.y, self.Y)))

    def selected(self, delta: Sequence[int]) -> "JetBox":
        """Part of the box where ``delta(i) * y_i >= 0`` for every index."""
        Y = []
        for s, iv in zip(delta, self.Y):
            Y.append(Interval(max(iv.lo, 0.0), iv.hi) if s > 0 else Interval(iv.lo, min(iv.hi, 0.0)))
        return JetBox(self.E, list(self.X), Y)

    def y_diameter(self) -> np.ndarray:
        return np.array([iv.width for iv in self.Y])

    def to_dict(self) -> dict:
        return {"x": [iv.as_list() for iv in self.X], "y": [iv.as_list() for iv in self.Y]}


# ---------------------------------------------------------------------------
# jet dynamics
# ---------------------------------------------------------------------------

def jet_pushforward(system: SystemSpec, a0, jet: Jet, branch=None) -> Jet:
    """Jet at ``a0`` of ``a -> f_a(z_a)`` where ``jet`` is the jet of ``z_a``."""
    if system.dim != 2:
        raise UsageError("jets are defined for planar systems")
    a0v = param_vector(system, a0)
    E = jet.E
    if E.k != system.k and system.k != 0:
        raise UsageError(f"jet has {E.k} parameters, system takes {system.k}")
    if branch is None:
        if system.n_branches > 1:
            raise UsageError(f"{system.kind} is piecewise: a branch is required")
        b = 0
    elif isinstance(system, ParablenderFull):
        b = system.resolve_branch(branch)
    elif isinstance(branch, (tuple, list)):
        b = system.branch_of_symbol(branch)
    else:
        b = int(branch)
    if not 0 <= b < system.n_branches:
        raise UsageError(f"no branch {branch!r}")
    a = [TruncatedPoly.variable(E, j, a0v[j]) for j in range(system.k)]
    X, Y = TruncatedPoly(E, jet.x), TruncatedPoly(E, jet.y)
    out = [X._lift(v) for v in system.branch_map([X, Y], b, a)]
    return Jet(E, out[0].c, out[1].c)


@dataclass(frozen=True)
class BranchLayout:
    """Exact affine data of the core branches: ``x = centre + u * half_length``."""

    d: int
    k: int
    contraction: Fraction
    E: MultiIndexSet = field(init=False)
    deltas: list = field(init=False)
    centers: tuple[float, ...] = field(init=False)
    half_lengths: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        sysm = ParablenderCore(self.d, self.k)
        object.__setattr__(self, "E", sysm.E)
        object.__setattr__(self, "deltas", sysm.deltas)
        object.__setattr__(self, "centers", tuple(float(c) for c in sysm.centers))
        object.__setattr__(self, "half_lengths", tuple(float(l) / 2 for l in sysm.lengths))


def branch_layout(d: int, k: int, contraction=CRITICAL_CONTRACTION) -> BranchLayout:
    return BranchLayout(d, k, Fraction(contraction))


@dataclass(frozen=True)
class AffineJetMap:
    """Per-index affine map ``x_i -> ax*x_i + bx_i``, ``y_i -> ay*y_i + by_i``."""

    E: MultiIndexSet
    ax: Fraction
    bx: tuple[Fraction, ...]
    ay: Fraction
    by: tuple[Fraction, ...]

    def __call__(self, jet: Jet) -> Jet:
        return Jet(self.E,
                   [float(self.ax) * v + float(b) for v, b in zip(jet.x, self.bx)],
                   [float(self.ay) * v + float(b) for v, b in zip(jet.y, self.by)])

    def apply_box(self, box: JetBox) -> JetBox:
        return JetBox(self.E,
                      [iv.scale(self.ax).shift(b) for iv, b in zip(box.X, self.bx)],
                      [iv.scale(self.ay).shift(b) for iv, b in zip(box.Y, self.by)])


def jet_branch_inverse_map(delta: Sequence[int], d: int, k: int,
                           contraction=CRITICAL_CONTRACTION) -> AffineJetMap:
    """Jet at ``a0 = 0`` of the inverse of the core branch labelled ``delta``.

    ``x_0 -> c + x_0 / q``, ``x_i -> x_i / q`` for ``i != 0`` (``q`` the slope
    of the branch chart) and ``y_i -> (y_i - delta(i)) / contraction``.
    """
    lay = branch_layout(d, k, contraction)
    delta = tuple(int(s) for s in delta)
    if len(delta) != len(lay.E) or any(s not in (-1, 1) for s in delta):
        raise UsageError(f"delta must be a +-1 vector of length {len(lay.E)}")
    b = lay.deltas.index(delta)
    inv_q = Fraction(lay.half_lengths[b])
    bx = (Fraction(lay.centers[b]),) + (Fraction(0),) * (len(lay.E) - 1)
    ay = 1 / lay.contraction
    by = tuple(-Fraction(s) * ay for s in delta)
    return AffineJetMap(lay.E, inv_q, bx, ay, by)


def _forward_map(delta, d, k, contraction) -> AffineJetMap:
    inv = jet_branch_inverse_map(delta, d, k, contraction)
    ax = 1 / inv.ax
    ay = 1 / inv.ay
    return AffineJetMap(inv.E, ax, tuple(-b * ax for b in inv.bx), ay,
                        tuple(-b * ay for b in inv.by))


def admissible_symbol(jet_y) -> tuple[int, ...]:
    """``delta(i) = sign(y_i)`` with ties to +1."""
    return tuple(1 if v >= 0 else -1 for v in jet_y)


def fixed_jet(delta: Sequence[int], d: int, k: int, contraction=CRITICAL_CONTRACTION) -> Jet:
    """The jet fixed by the branch ``delta``: ``y_i = delta(i) / (1 - contraction)``."""
    lay = branch_layout(d, k, contraction)
    b = lay.deltas.index(tuple(delta))
    q = 1.0 / lay.half_lengths[b]
    x = np.zeros(len(lay.E))
    x[0] = q * lay.centers[b] / (q - 1.0)
    c = float(lay.contraction)
    return Jet(lay.E, x, [s / (1.0 - c) for s in delta])


# ---------------------------------------------------------------------------
# covering certificate
# ---------------------------------------------------------------------------

X_BOUND = 0.5        # |x_i| <= 1/2 in the literal target box
LITERAL_Y_BOUND = 1.0
DOMAIN_Y_BOUND = 2.0  # |y_i| < 2 on the covered domain
MAX_Y_BOUND = 3.0


@dataclass
class CoverCertificate:
    d: int
    k: int
    contraction: Fraction
    verdict: str                    # covered | inconclusive | not_covered
    box: JetBox | None
    images: dict = field(default_factory=dict)
    literal_closes: bool = False
    literal_excess: float = 0.0
    trace: list = field(default_factory=list)
    counterexample: dict | None = None

    @property
    def exit_code(self) -> int:
        return {"covered": 0, "inconclusive": 4, "not_covered": 5}[self.verdict]

    def to_dict(self) -> dict:
        return {
            "d": self.d, "k": self.k,
            "indices": [list(i) for i in MultiIndexSet(self.d, self.k)],
            "contraction": f"{self.contraction.numerator}/{self.contraction.denominator}",
            "verdict": self.verdict,
            "certified_box": None if self.box is None else self.box.to_dict(),
            "branch_images": self.images,
            "literal_box": {"x_bound": X_BOUND, "y_bound": LITERAL_Y_BOUND,
                            "closes": self.literal_closes,
                            "max_excess": self.literal_excess},
            "trace": self.trace,
            "counterexample": self.counterexample,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render(self) -> str:
        lines = [f"parablender covering certificate  d={self.d} k={self.k} "
                 f"contraction={self.contraction}",
                 f"verdict: {self.verdict.upper()}",
                 f"literal box |x_i|<=1/2, |y_i|<=1 closes: {self.literal_closes}"
                 + ("" if self.literal_closes else f" (images overshoot by {self.literal_excess:.6g})")]
        if self.box is not None:
            lines.append(f"certified box: |x_i| <= {self.box.X[0].hi:.17g}, "
                         f"|y_i| <= {self.box.Y[0].hi:.17g}")
        lines.append(f"box search ({len(self.trace)} steps):")
        for t in self.trace:
            lines.append(f"  y_bound={t['y_bound']:.17g} closes={t['closes']} "
                         f"excess={t['excess']:.6g}")
        if self.counterexample:
            ce = self.counterexample
            lines.append(f"counterexample: jets with y_0 in {ce['y0']} leave |y|<{DOMAIN_Y_BOUND:g} "
                         f"under every symbol choice within {ce['depth']} pullbacks")
        return "\n".join(lines) + "\n"


def _closure(d, k, contraction, y_bound) -> tuple[bool, float, dict]:
    E = MultiIndexSet(d, k)
    box = JetBox.uniform(E, X_BOUND, y_bound)
    worst = 0.0
    images = {}
    for delta in E.symbols():
        img = jet_branch_inverse_map(delta, d, k, contraction).apply_box(box.selected(delta))
        for iv, ref in zip(img.X + img.Y, box.X + box.Y):
            worst = max(worst, ref.lo - iv.lo, iv.hi - ref.hi)
        images["".join("+" if s > 0 else "-" for s in delta)] = img.to_dict()
    return worst <= 0.0, worst, images


def _escapes(Y: Interval, ay: Fraction, depth: int) -> bool:
    """True if every backward symbol path from ``Y`` leaves ``|y| < 2`` within ``depth`` steps."""
    if depth == 0:
        return False
    for s in (-1, 1):
        img = Y.shift(-s).scale(ay)
        if img.hi > -DOMAIN_Y_BOUND and img.lo < DOMAIN_Y_BOUND:
            if not _escapes(img, ay, depth - 1):
                return False
    return True


def _find_counterexample(contraction, depth=8, max_level=8) -> dict | None:
    ay = 1 / Fraction(contraction)
    for level in range(1, max_level + 1):
        for cell in Interval(-LITERAL_Y_BOUND, LITERAL_Y_BOUND).split(2 ** level):
            if _escapes(cell, ay, depth):
                return {"y0": cell.as_list(), "depth": depth, "level": level}
    return None


def verify_covered_domain(d: int, k: int, contraction=CRITICAL_CONTRACTION, *,
                          growth: float = 1.05, max_y: float = MAX_Y_BOUND) -> CoverCertificate:
    """Search for a jet box mapped into itself by every admissible inverse branch.

    Starts from ``|x_i| <= 1/2, |y_i| <= 1`` and widens the y bound by
    ``growth`` until all selected preimages land inside (interval arithmetic,
    outward rounding).  If no box up to ``max_y`` closes, look for a cell of
    jets whose preimages provably leave the domain (verdict ``not_covered``).
    """
    if d < 0 or k < 1:
        raise UsageError("need d >= 0 and k >= 1")
    E = MultiIndexSet(d, k)
    if len(E) > 12:
        raise UsageError(f"|E| = {len(E)} > 12: 2^|E| symbols too many to enumerate")
    contraction = Fraction(contraction)
    literal_ok, literal_excess, _ = _closure(d, k, contraction, LITERAL_Y_BOUND)
    trace = []
    c = LITERAL_Y_BOUND
    while True:
        ok, excess, images = _closure(d, k, contraction, c)
        trace.append({"y_bound": c, "closes": ok, "excess": excess})
        if ok:
            return CoverCertificate(d, k, contraction, "covered", JetBox.uniform(E, X_BOUND, c),
                                    images, literal_ok, literal_excess, trace)
        if c >= max_y:
            break
        c = min(c * growth, max_y)
    ce = _find_counterexample(contraction)
    verdict = "not_covered" if ce else "inconclusive"
    return CoverCertificate(d, k, contraction, verdict, None, {}, literal_ok, literal_excess,
                            trace, ce)


def invariant_box(d: int, k: int, y_bound: float = MAX_Y_BOUND,
                  contraction=CRITICAL_CONTRACTION) -> JetBox:
    """Uniform jet box with the given y bound, after checking that it closes."""
    ok, excess, _ = _closure(d, k, Fraction(contraction), y_bound)
    if not ok:
        raise UsageError(f"box |y_i| <= {y_bound} is not invariant (excess {excess:.3g})")
    return JetBox.uniform(MultiIndexSet(d, k), X_BOUND, y_bound)


@dataclass
class ConstantJetCover:
    symbols: list[tuple[int, ...]]
    residual_y: np.ndarray
    residual_x: np.ndarray
    bound_y: np.ndarray
    pullbacks: list[Jet] = field(repr=False, default_factory=list)

    @property
    def residual(self) -> float:
        return float(np.max(self.residual_y))


def cover_constant_jet(target: Jet, depth: int, box: JetBox | None = None,
                       contraction=CRITICAL_CONTRACTION) -> ConstantJetCover:
    """Pull ``target`` back ``depth`` times with admissible symbols, then push forward.

    The forward orbit starts from the deepest pullback with its y part
    replaced by the fixed jet of the deepest symbol (a jet on the local
    unstable set of that branch's fixed point), or by the box centre if that
    fixed jet lies outside ``box``.  With ``depth == 0`` it starts from the
    zero jet.  ``residual_*`` is the per-coefficient error of the forward
    image; ``bound_y`` is the diameter of the forward image of the whole box,
    which holds both the target and the start's image.
    """
    E = target.E
    if depth < 0:
        raise UsageError("depth must be nonnegative")
    box = invariant_box(E.d, E.k, contraction=contraction) if box is None else box
    if not box.contains(target):
        raise OutOfDomainError("target jet lies outside the certified box")
    symbols, pulls = [], [target]
    cur = target
    for _ in range(depth):
        delta = admissible_symbol(cur.y)
        cur = jet_branch_inverse_map(delta, E.d, E.k, contraction)(cur)
        if not box.contains(cur):
            raise OutOfDomainError("pullback left the box: box is not invariant")
        symbols.append(delta)
        pulls.append(cur)
    if not symbols:
        start = Jet(E, np.zeros(len(E)), np.zeros(len(E)))
    else:
        start = Jet(E, cur.x, fixed_jet(symbols[-1], E.d, E.k, contraction).y)
        if not box.contains(start):
            start = Jet(E, cur.x, np.zeros(len(E)))
    fwd = start
    img = JetBox(E, list(box.X), list(box.Y))
    for delta in reversed(symbols):
        f = _forward_map(delta, E.d, E.k, contraction)
        fwd = f(fwd)
        img = JetBox(E, img.X, [iv.scale(f.ay).shift(b) for iv, b in zip(img.Y, f.by)])
    return ConstantJetCover(symbols, np.abs(fwd.y - target.y), np.abs(fwd.x - target.x),
                            img.y_diameter(), pulls)
