import json
import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emergelab.sinks import (
    PeriodicOrbit, basin_measure_estimate, classify, classify_multipliers, find_periodic,
    orbit_multipliers, seed_grid, sink_census,
)
from emergelab.systems import (
    Doubling, Henon, Identity, ParablenderFull, PlantedSinks, SystemSpec, UsageError, param_vector,
)
from emergelab.transport import w1


@dataclass(frozen=True)
class Halving(SystemSpec):
    """``(x, y) -> (x/2, y/2)`` on [-1, 1]^2."""

    kind: ClassVar[str] = "Halving"
    dim: ClassVar[int] = 2
    k: ClassVar[int] = 0

    @property
    def box(self):
        return np.full(2, -1.0), np.full(2, 1.0)

    def branch_map(self, coords, b, a):
        return [0.5 * coords[0], 0.5 * coords[1]]

    def branch_jacobian(self, z, b, a):
        return 0.5 * np.eye(2)

    def to_dict(self):
        return {"kind": self.kind}


def _orbit(mults, p=1):
    return PeriodicOrbit(np.zeros((p, 2)), np.asarray(mults, dtype=complex))


# -- classification ------------------------------------------------------------------

@pytest.mark.parametrize("mults,label", [
    ((0.5, 0.5), "Sink"),
    ((1j * math.sqrt(0.3), -1j * math.sqrt(0.3)), "Sink"),
    ((32, 4), "ProjHypSource"),
    ((3, 3), "Source"),
    ((2, 0.1), "Saddle"),
    ((1, 0.5), "NonHyperbolic"),
    ((1 - 1e-7, 0.5), "NonHyperbolic"),
    ((1 + 1e-7, 2), "NonHyperbolic"),
])
def test_classify_examples(mults, label):
    assert classify(_orbit(mults)) == label


def test_area_contracting_flag():
    assert classify_multipliers((3.0, 0.2)) == ("Saddle", True)
    assert classify_multipliers((3.0, 0.5)) == ("Saddle", False)
    assert classify_multipliers((0.5, 0.5))[1] is False


@given(st.floats(0, 3), st.floats(0, 3), st.floats(0, 2 * math.pi))
def test_classification_is_consistent_with_moduli(r1, r2, phase):
    mults = (r1 * complex(math.cos(phase), math.sin(phase)), r2)
    label = classify(_orbit(mults))
    lo, hi = sorted((r1, r2))
    tol = 1e-6
    if label == "Sink":
        assert hi < 1 - tol
    elif label in ("Source", "ProjHypSource"):
        assert lo > 1 + tol
        assert (label == "ProjHypSource") == (hi > (1 + tol) * lo)
    elif label == "Saddle":
        assert lo < 1 - tol < 1 + tol < hi
    else:
        assert abs(lo - 1) <= tol or abs(hi - 1) <= tol


# -- periodic orbits ---------------------------------------------------------------

def test_henon_fixed_points_from_small_grid():
    orbits = find_periodic(Henon(0.0, 0.3), None, 1, seed_grid(Henon(0.0, 0.3), 20))
    pts = sorted(tuple(o.representative) for o in orbits)
    assert len(pts) == 2
    assert pts[0] == pytest.approx((0.0, 0.0), abs=1e-12)
    assert pts[1] == pytest.approx((1.3, -0.39), abs=1e-12)


def test_henon_origin_multipliers():
    orbits = find_periodic(Henon(0.0, 0.3), None, 1, [(0.01, 0.02)])
    (o,) = orbits
    want = np.linalg.eigvals(np.array([[0.0, 1.0], [-0.3, 0.0]]))
    assert np.abs(o.multipliers) == pytest.approx(np.abs(want), abs=1e-12)
    assert o.classification == "Sink"


def test_halving_has_sink_at_origin():
    (o,) = find_periodic(Halving(), None, 1, seed_grid(Halving(), 5))
    assert o.representative == pytest.approx((0.0, 0.0), abs=1e-15)
    assert o.multipliers.real.tolist() == [0.5, 0.5]
    assert basin_measure_estimate(Halving(), None, o, 500, 40).fraction == 1.0


def test_identity_fixed_points_are_nonhyperbolic():
    orbits = find_periodic(Identity(2), None, 1, [(0.2, 0.3), (0.7, 0.1)])
    assert len(orbits) == 2
    assert all(o.classification == "NonHyperbolic" for o in orbits)
    assert len(sink_census(Identity(2), None, 1, grid=5)) == 0


def test_parablender_source_is_projectively_hyperbolic():
    s = ParablenderFull(1, 1)
    orbits = find_periodic(s, [0.0], 1, [(s.x_S + 1e-3, 1e-3)])
    (o,) = orbits
    assert o.representative == pytest.approx((s.x_S, 0.0), abs=1e-12)
    assert np.abs(o.multipliers) == pytest.approx([32.0, 4.0])
    assert o.classification == "ProjHypSource"


def test_divisor_periods_are_filtered():
    diag = []
    orbits = find_periodic(Henon(0.0, 0.3), None, 2, [(0.01, 0.01)], diagnostics=diag)
    assert orbits == []
    assert "period 1" in diag[0].reason


def test_nonpositive_period_rejected():
    with pytest.raises(UsageError):
        find_periodic(Henon(), None, 0, [(0.0, 0.0)])


def _fd_multipliers(system, a, z, p, h=1e-6):
    def fp(v):
        for _ in range(p):
            b = int(system.branch_index(np.asarray(v)[None, :])[0])
            v = np.array(system.branch_map(list(v), b, a), dtype=float)
        return v
    J = np.column_stack([(fp(z + h * e) - fp(z - h * e)) / (2 * h) for e in np.eye(system.dim)])
    return np.sort(np.abs(np.linalg.eigvals(J)))


@pytest.mark.parametrize("a,p", [(-1.4, 1), (-1.4, 2), (-1.3, 2), (-1.4, 3), (-1.4, 4), (0.0, 1)])
def test_multipliers_match_finite_differences(a, p):
    system = Henon(a, 0.3)
    orbits = find_periodic(system, None, p, seed_grid(system, 30))
    assert orbits
    pa = param_vector(system, None)
    for o in orbits:
        fd = _fd_multipliers(system, pa, o.representative, p)
        got = np.sort(np.abs(o.multipliers))
        assert got == pytest.approx(fd, rel=1e-5, abs=1e-9)


@pytest.mark.parametrize("a,p", [(-1.4, 3), (-1.3, 2), (-1.4, 4)])
def test_multipliers_are_cyclically_invariant(a, p):
    system = Henon(a, 0.3)
    pa = param_vector(system, None)
    orbits = find_periodic(system, None, p, seed_grid(system, 30))
    assert orbits
    for o in orbits:
        assert o.period == p
        for s in range(p):
            pts = np.roll(o.points, -s, axis=0)
            itin = o.itinerary[s:] + o.itinerary[:s]
            m = orbit_multipliers(system, pa, pts, itin)
            assert np.max(np.abs(np.sort_complex(m) - np.sort_complex(o.multipliers))) <= 1e-10


def test_orbits_close_up():
    system = Henon(-1.4, 0.3)
    pa = param_vector(system, None)
    for p in (1, 2, 3):
        for o in find_periodic(system, None, p, seed_grid(system, 25)):
            z = o.representative
            for _ in range(p):
                z = np.array(system.branch_map(list(z), 0, pa))
            assert np.linalg.norm(z - o.representative) <= 1e-10


def test_threads_give_same_orbits():
    system = Henon(-1.4, 0.3)
    a = find_periodic(system, None, 3, seed_grid(system, 20), threads=1)
    b = find_periodic(system, None, 3, seed_grid(system, 20), threads=4)
    assert [o.to_dict() for o in a] == [o.to_dict() for o in b]


# -- census --------------------------------------------------------------------------

@pytest.mark.parametrize("N", [1, 2, 4, 8])
def test_planted_sinks_census(N):
    system = PlantedSinks(N)
    census = sink_census(system, None, 1, grid=20)
    assert len(census) == N
    got = sorted(tuple(o.representative) for o in census.sinks)
    want = sorted(map(tuple, system.sink_points))
    assert np.allclose(got, want, atol=1e-12)
    assert all(np.allclose(o.multipliers, 0.5) for o in census.sinks)


def test_planted_sinks_census_has_no_higher_period_sinks():
    assert len(sink_census(PlantedSinks(4), None, 3, grid=12)) == 4


def test_doubling_census_is_empty():
    assert len(sink_census(Doubling(), None, 4, grid=50)) == 0


def test_henon_census_contains_origin():
    census = sink_census(Henon(0.0, 0.3), None, 2, grid=20)
    assert census.sinks
    origin = [o for o in census.sinks if np.linalg.norm(o.representative) < 1e-12]
    assert len(origin) == 1
    assert np.abs(origin[0].multipliers) == pytest.approx([math.sqrt(0.3)] * 2, abs=1e-12)


def test_census_entries_are_distinct_sinks():
    census = sink_census(Henon(-1.3, 0.3), None, 4, grid=30)
    assert [o.period for o in census.sinks] == [2]
    pts = np.vstack([o.points for o in census.sinks])
    assert all(o.classification == "Sink" for o in census.sinks)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            assert np.linalg.norm(pts[i] - pts[j]) > census.dedup_tol


def test_census_serialisation_is_deterministic():
    a = sink_census(PlantedSinks(4), None, 2, grid=10, jitter_seed=3)
    b = sink_census(PlantedSinks(4), None, 2, grid=10, jitter_seed=3)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    lines = a.to_csv().splitlines()
    assert lines[0] == "period,x,y,mult1_re,mult1_im,mult2_re,mult2_im,classification"
    assert len(lines) == 5 and all(line.endswith(",Sink") for line in lines[1:])
    doc = json.loads(a.to_json())
    assert doc["grid"] == {"points_per_axis": 10, "jitter_seed": 3}
    assert len(doc["sinks"]) == 4


def test_one_dimensional_census_csv_pads_columns():
    text = sink_census(Identity(1), None, 1, grid=3).to_csv()
    assert text.splitlines() == ["period,x,y,mult1_re,mult1_im,mult2_re,mult2_im,classification"]


# -- basins --------------------------------------------------------------------------

def test_planted_basins_match_cell_areas():
    system = PlantedSinks(4)
    census = sink_census(system, None, 1, grid=10)
    total = 0.0
    for o in census.sinks:
        est = basin_measure_estimate(system, None, o, samples=4000, n=40, seed=1)
        assert abs(est.fraction - 0.25) <= 2 * math.sqrt(0.25 * 0.75 / 4000)
        assert len(est.limit) == 1
        total += est.fraction
    assert total == pytest.approx(1.0)


def test_basin_limit_measures_are_separated():
    system = PlantedSinks(4)
    census = sink_census(system, None, 1, grid=10)
    limits = [basin_measure_estimate(system, None, o, 200, 30).limit for o in census.sinks]
    delta = min(w1(limits[i], limits[j]) for i in range(4) for j in range(i + 1, 4))
    assert delta > 0


def test_basin_estimate_needs_a_sink():
    system = Doubling()
    orbits = find_periodic(system, None, 1, [(0.3,)])
    assert [o.classification for o in orbits] == ["Source"]
    with pytest.raises(UsageError):
        basin_measure_estimate(system, None, orbits[0])
