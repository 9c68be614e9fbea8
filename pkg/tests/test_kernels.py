import numpy as np
import pytest

from emergelab import _kernels

from oracles import transport_oracle


def _problem(rng, m, n, degenerate=False):
    if degenerate:
        a = np.full(m, 1.0 / m)
        b = np.full(n, 1.0 / n)
        C = rng.integers(0, 3, (m, n)).astype(float)
    else:
        a = rng.random(m) + 0.01
        b = rng.random(n) + 0.01
        a, b = a / a.sum(), b / b.sum()
        C = rng.random((m, n)) * 2
    return a, b, C


def test_backend_selected():
    assert _kernels.BACKEND in _kernels.BACKENDS
    assert "python" in _kernels.BACKENDS


@pytest.mark.parametrize("degenerate", [False, True])
def test_transport_is_optimal_and_feasible(kernels, degenerate):
    rng = np.random.default_rng(21)
    for _ in range(40):
        m, n = rng.integers(1, 6, 2)
        a, b, C = _problem(rng, m, n, degenerate)
        cost, rows, cols, flow = kernels.transport(a, b, C)
        assert len(rows) == m + n - 1
        assert np.all(flow >= 0)
        F = np.zeros((m, n))
        np.add.at(F, (rows, cols), flow)
        assert np.allclose(F.sum(axis=1), a, atol=1e-12)
        assert np.allclose(F.sum(axis=0), b, atol=1e-12)
        assert cost == pytest.approx(transport_oracle(a, b, C), abs=1e-9)


def test_backends_agree_on_larger_problems():
    if len(_kernels.BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(3)
    py, cy = _kernels.BACKENDS["python"], _kernels.BACKENDS["cython"]
    for m, n in [(20, 30), (40, 40), (7, 60)]:
        a, b, C = _problem(rng, m, n)
        assert py.transport(a, b, C)[0] == pytest.approx(cy.transport(a, b, C)[0], abs=1e-12)


def test_iteration_cap_reported(kernels):
    rng = np.random.default_rng(9)
    a, b, C = _problem(rng, 8, 8)
    with pytest.raises(RuntimeError):
        kernels.transport(a, b, C, max_iter=0)


def _objective(D, w, centers):
    return float(np.dot(w, D[list(centers)].min(axis=0)))


def test_best_swap_matches_enumeration(kernels):
    rng = np.random.default_rng(5)
    for _ in range(30):
        S = int(rng.integers(4, 12))
        X = rng.random((S, 2))
        D = np.linalg.norm(X[:, None] - X[None], axis=-1)
        w = np.full(S, 1.0 / S)
        k = int(rng.integers(1, min(4, S - 1) + 1))
        centers = sorted(rng.choice(S, k, replace=False).tolist())
        best, c, pos = kernels.best_swap(D, w, np.array(centers))
        want = min(_objective(D, w, centers[:p] + [cand] + centers[p + 1:])
                   for cand in range(S) if cand not in centers for p in range(k))
        assert best == pytest.approx(want, abs=1e-12)
        swapped = centers[:pos] + [c] + centers[pos + 1:]
        assert _objective(D, w, swapped) == pytest.approx(best, abs=1e-12)


def test_add_costs(kernels):
    rng = np.random.default_rng(6)
    D = rng.random((9, 9))
    w = rng.random(9)
    w /= w.sum()
    d1 = D[2]
    out = kernels.add_costs(D, w, d1)
    for c in range(9):
        assert out[c] == pytest.approx(float(np.dot(w, np.minimum(D[c], d1))), abs=1e-14)


def test_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    loader = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(loader)
    loader.loader.exec_module(bench)
    bench.main(["--sizes", "12", "--repeat", "1"])
    out = capsys.readouterr().out
    assert "transport" in out and "best_swap" in out
