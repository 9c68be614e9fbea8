"""End-to-end acceptance checks, one test per criterion.

The terminal summary (see conftest.py) prints one PASS/FAIL line for each.
"""
import json
import math
import time

import numpy as np
import pytest

from emergelab.cli import main
from emergelab.emergence import (
    EmergenceQuery, birkhoff_cloud, covering_number, emergence_curve, kmedian,
)
from emergelab.jets import Jet, cover_constant_jet, jet_branch_inverse_map, verify_covered_domain
from emergelab.sinks import basin_measure_estimate, sink_census
from emergelab.systems import Doubling, Henon, Identity, PlantedSinks, Rotation
from emergelab.transport import DiscreteMeasure, GroundMetric, pairwise_w1, w1

from oracles import w1_oracle

LADDER = (0.2, 0.1, 0.05, 0.025)


def _random_measure(rng, dim):
    m = int(rng.integers(1, 7))
    w = rng.random(m) + 0.01
    return DiscreteMeasure(rng.random((m, dim)) * 3.0, w / w.sum())


@pytest.mark.criterion(1, "transport solver matches brute-force oracle on 200 pairs (1e-9, < 10 s)")
def test_w1_oracle_equivalence():
    rng = np.random.default_rng(2024)
    pairs = [(_random_measure(rng, d), _random_measure(rng, d)) for d in (1, 2) for _ in range(100)]
    t0 = time.perf_counter()
    got = [w1(a, b) for a, b in pairs]
    elapsed = time.perf_counter() - t0
    want = [w1_oracle(a.atoms, a.weights, b.atoms, b.weights) for a, b in pairs]
    assert np.max(np.abs(np.subtract(got, want))) <= 1e-9
    assert elapsed < 10


@pytest.mark.criterion(2, "W1 symmetry and triangle inequality on 500 triples")
def test_w1_metric_axioms():
    rng = np.random.default_rng(7)
    worst_slack, worst_asym = math.inf, 0.0
    for t in range(500):
        dim = 1 + t % 2
        mu, nu, rho = (_random_measure(rng, dim) for _ in range(3))
        d_mn, d_nm = w1(mu, nu), w1(nu, mu)
        worst_asym = max(worst_asym, abs(d_mn - d_nm))
        worst_slack = min(worst_slack, d_mn + w1(nu, rho) - w1(mu, rho))
    assert worst_slack >= -1e-10
    assert worst_asym <= 1e-10


@pytest.mark.criterion(3, "Rotation(sqrt2 - 1), n = 1e4, 200 samples: N = 1 at every eps (< 60 s)")
def test_rotation_has_emergence_one():
    q = EmergenceQuery(n_ladder=(10_000,), sample_count=200, epsilons=(0.2, 0.1, 0.05), seed=1)
    t0 = time.perf_counter()
    curve = emergence_curve(Rotation(math.sqrt(2) - 1), None, q)
    assert time.perf_counter() - t0 < 60
    assert curve.counts.tolist() == [1, 1, 1]


@pytest.mark.criterion(4, "Identity scaling: slope 1.0 +- 0.4 on [0,1], 2.0 +- 0.5 on [0,1]^2 (< 5 min)")
def test_identity_scaling():
    t0 = time.perf_counter()
    one = emergence_curve(Identity(1), None, EmergenceQuery(n_ladder=(1,), sample_count=400,
                                                            epsilons=LADDER, seed=0))
    assert time.perf_counter() - t0 < 300
    t0 = time.perf_counter()
    two = emergence_curve(Identity(2), None, EmergenceQuery(n_ladder=(1,), sample_count=1000,
                                                            epsilons=LADDER, seed=0))
    assert time.perf_counter() - t0 < 300
    assert abs(one.slope - 1.0) <= 0.4
    assert abs(two.slope - 2.0) <= 0.5


@pytest.mark.criterion(5, "Doubling map: slope < 0.3 and final N <= 3")
def test_doubling_is_finite_class():
    q = EmergenceQuery(n_ladder=(1000, 10_000), sample_count=200, epsilons=LADDER, seed=0)
    curve = emergence_curve(Doubling(), None, q)
    assert curve.slope < 0.3
    assert curve.counts[-1] <= 3


@pytest.mark.criterion(6, "PlantedSinks(N), N in {2,4,8}: N sinks, covering number N, N-1 centres fail")
@pytest.mark.parametrize("N", [2, 4, 8])
def test_sink_count_matches_covering_number(N):
    system = PlantedSinks(N)
    g = GroundMetric.for_system(system)
    census = sink_census(system, None, 1, grid=20)
    assert len(census) == N

    basins = [basin_measure_estimate(system, None, o, samples=4000, n=40, seed=1) for o in census.sinks]
    limits = [b.limit for b in basins]
    delta = min(w1(limits[i], limits[j], g) for i in range(N) for j in range(i + 1, N))
    assert delta > 0
    # below delta/2, and small enough that losing the lightest basin costs more than eps
    eps = 0.5 * min(b.fraction for b in basins) * delta
    assert eps < delta / 2

    q = EmergenceQuery(n_ladder=(400,), sample_count=400, epsilons=(eps,), seed=N, quantize_cell=1e-3)
    cloud = birkhoff_cloud(system, None, q)
    D = pairwise_w1(cloud.measures, g)
    w = cloud.sample_weights
    assert covering_number(D, w, eps).N == N

    # Lower bound for any N-1 centres drawn from the cloud: some basin cluster holds no centre,
    # and each of its members sits at least delta - 2 * spread from every other cluster.
    to_limits = np.array([[w1(m, lim, g) for lim in limits] for m in cloud.measures])
    label = to_limits.argmin(axis=1)
    spread = to_limits.min(axis=1).max()
    cluster_mass = np.bincount(label, weights=w, minlength=N)
    lower = cluster_mass.min() * (delta - 2 * spread)
    assert lower > eps
    assert kmedian(D, w, N - 1)[0] >= lower - 1e-12


@pytest.mark.criterion(7, "Henon(0, 0.3): sink at (0,0) with |multiplier| = sqrt(0.3) within 1e-8")
def test_henon_sink():
    census = sink_census(Henon(0.0, 0.3), None, 1, grid=50)
    origin = [o for o in census.sinks if np.linalg.norm(o.representative) < 1e-10]
    assert len(origin) == 1
    oracle = np.abs(np.linalg.eigvals(np.array([[0.0, 1.0], [-0.3, 0.0]])))
    assert np.allclose(np.abs(origin[0].multipliers), oracle, rtol=0, atol=1e-8)
    assert np.allclose(oracle, math.sqrt(0.3), rtol=0, atol=1e-15)


def _orbits_stay_in_box(box, count, steps, seed):
    E = box.E
    rng = np.random.default_rng(seed)
    xlo = np.array([iv.lo for iv in box.X]); xhi = np.array([iv.hi for iv in box.X])
    ylo = np.array([iv.lo for iv in box.Y]); yhi = np.array([iv.hi for iv in box.Y])
    X = xlo + (xhi - xlo) * rng.random((count, len(E)))
    Y = ylo + (yhi - ylo) * rng.random((count, len(E)))
    Y[:8] = np.where(rng.random((8, len(E))) < 0.5, ylo, yhi)   # a few corners
    Y[8] = 0.0                                                   # the tie
    maps = {}
    for delta in E.symbols():
        m = jet_branch_inverse_map(delta, E.d, E.k)
        maps[delta] = (float(m.ax), np.array([float(b) for b in m.bx]), float(m.ay),
                       np.array([float(b) for b in m.by]))
    violations = 0
    for _ in range(steps):
        signs = np.where(Y >= 0, 1, -1)
        for delta, (ax, bx, ay, by) in maps.items():
            rows = np.all(signs == np.array(delta), axis=1)
            if rows.any():
                X[rows] = ax * X[rows] + bx
                Y[rows] = ay * Y[rows] + by
        inside = np.all((xlo <= X) & (X <= xhi), axis=1) & np.all((ylo <= Y) & (Y <= yhi), axis=1)
        violations += int((~inside).sum())
    return violations


@pytest.mark.criterion(8, "covering certificate for (1,1), (2,1), (1,2); 1e5 orbits stay in the box (< 30 s)")
@pytest.mark.parametrize("d,k", [(1, 1), (2, 1), (1, 2)])
def test_parablender_certificate(d, k):
    t0 = time.perf_counter()
    cert = verify_covered_domain(d, k)
    assert cert.exit_code == 0 and cert.box is not None
    doc = json.loads(cert.to_json())
    assert isinstance(doc["literal_box"]["closes"], bool)
    assert _orbits_stay_in_box(cert.box, 100_000, 20, seed=d * 10 + k) == 0
    assert time.perf_counter() - t0 < 30


@pytest.mark.criterion(9, "zero jet covered at depth 40 with y residual < 1e-6 for (d,k) = (1,1)")
def test_constant_jet_covering():
    r = cover_constant_jet(Jet.zero(1, 1), 40)
    assert len(r.symbols) == 40
    assert r.residual_y.max() < 1e-6


@pytest.mark.criterion(10, "repeated emergence and sinks CLI runs give byte-identical CSV")
def test_cli_determinism(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({
        "system": {"kind": "PlantedSinks", "N": 4},
        "emergence": {"n_ladder": [100, 400], "sample_count": 60, "epsilons": [0.05, 0.03, 0.02, 0.01],
                      "seed": 9, "quantize_cell": 1e-3},
        "sinks": {"max_period": 2, "grid": 20, "jitter_seed": 5},
    }))
    for command, name in (("emergence", "curve.csv"), ("sinks", "census.csv")):
        runs = [tmp_path / f"{command}{i}" for i in range(2)]
        for out, threads in zip(runs, ("1", "2")):
            assert main([command, "--config", str(cfg), "--out", str(out), "--threads", threads]) == 0
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
