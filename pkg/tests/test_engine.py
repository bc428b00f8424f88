import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from sandpile import engine
from sandpile.engine import Schedule, new_state, stabilize
from sandpile.errors import InvalidConfig, NonConvergence


def test_new_state_kappa_examples():
    s = new_state(2, [((0, 0), 1e6)], 10)
    assert s.n == 1e6 and s.kappa == 1e5
    s = new_state(3, [((0, 0, 0), 8)], 2)
    assert s.kappa == pytest.approx(2.0, rel=1e-15)


def test_new_state_two_sources():
    s = new_state(2, [((-47, 0), 5e4), ((47, 0), 5e4)], 10)
    assert s.n == 1e5
    assert s.mu0[(-47, 0)] == 5e4 == s.mu0[(47, 0)]
    np.testing.assert_array_equal(s.visited.values, s.mu0.values > 0)
    assert not s.u.values.any()


def test_duplicate_sources_merge():
    s = new_state(2, [((1, 1), 3.0), ((1, 1), 4.0)], 1)
    assert s.sources == [((1, 1), 7.0)]


@pytest.mark.parametrize("sources, m", [
    ([], 1.0),
    ([((0, 0), 0.0)], 1.0),
    ([((0, 0), -1.0)], 1.0),
    ([((0, 0), 1.0)], 0.0),
    ([((0, 0, 0), 1.0)], 1.0),
])
def test_new_state_rejects_bad_config(sources, m):
    with pytest.raises(InvalidConfig):
        new_state(2, sources, m)


def test_excess_rules():
    s = new_state(2, [((0, 0), 100.0)], 10)
    s.mu[(0, 0)] = 15.0
    assert engine.excess(s, (0, 0)) == 5.0
    s.mu[(0, 0)] = 7.0
    s.u[(0, 0)] = s.kappa + 1
    assert engine.excess(s, (0, 0)) == 7.0
    s.u[(0, 0)] = s.kappa
    assert engine.excess(s, (0, 0)) == 0.0


def test_first_topple_example():
    s = new_state(2, [((0, 0), 100.0)], 10)
    assert engine.topple(s, (0, 0)) == 90.0
    assert s.mu[(0, 0)] == 10.0 and s.u[(0, 0)] == 90.0
    assert all(s.mu[y] == 22.5 and s.visited[y] for y in [(1, 0), (-1, 0), (0, 1), (0, -1)])
    assert engine.total_mass(s) == 100.0


def test_topple_stable_site_is_idle():
    s = new_state(2, [((0, 0), 5.0)], 10)
    before = s.copy()
    assert engine.topple(s, (0, 0)) == 0.0
    np.testing.assert_array_equal(before.mu.values, s.mu.values)
    assert s.topplings == 0


def test_topple_grows_box_on_demand():
    s = new_state(2, [((0, 0), 100.0)], 10, radius=0)
    engine.topple(s, (0, 0))
    assert s.radius >= 1 and s.mu[(1, 0)] == 22.5


def test_already_stable_means_zero_odometer():
    s = new_state(2, [((0, 0), 10.0)], 10)
    out = stabilize(s)
    assert out.sweeps == 0 and not s.u.values.any()
    np.testing.assert_array_equal(s.mu.values, s.mu0.values)


def test_burst_dumps_everything_once_past_cutoff():
    mu = np.array([15.0, 15.0, 5.0])
    u = np.array([0.0, 95.0, 0.0])
    np.testing.assert_array_equal(engine.burst_values(mu, u, 10.0, 99.0), [5.0, 15.0, 0.0])
    np.testing.assert_array_equal(engine.excess_values(mu, u, 10.0, 99.0), [5.0, 5.0, 0.0])


def test_stabilize_rejects_nonpositive_eps():
    with pytest.raises(InvalidConfig):
        stabilize(new_state(2, [((0, 0), 100.0)], 10), eps_stop=0.0)


def test_unknown_schedule():
    with pytest.raises(InvalidConfig):
        Schedule("zigzag")


def test_toppling_cap_raises_with_diagnostics():
    s = new_state(2, [((0, 0), 1e6)], 10)
    with pytest.raises(NonConvergence) as info:
        stabilize(s, max_topplings=10)
    assert info.value.residual_excess > 0 and info.value.topplings > 10


@pytest.mark.parametrize("d, sources, m", [
    (2, [((0, 0), 300.0)], 5.0),
    (3, [((0, 0, 0), 200.0)], 3.0),
    (2, [((0, 0), 1000.0)], 10.0),
    (2, [((-3, 0), 300.0), ((4, 1), 200.0)], 5.0),
])
def test_matches_sequential_oracle(d, sources, m):
    u_ref, mu_ref, _ = oracles.sequential_stabilize(d, sources, m, 1e-11)
    s = new_state(d, sources, m)
    stabilize(s, eps_stop=1e-11)
    top = max(u_ref.values())
    assert max(abs(v - s.u[x]) for x, v in u_ref.items()) <= 1e-9 * top
    assert {x for x, v in u_ref.items() if v > 0} == {tuple(x) for x in s.u.sites(s.u.values > 0)}


@pytest.mark.parametrize("lift_every", [None, 4, 32])
def test_lift_does_not_change_the_limit(lift_every, run_1e4):
    s = new_state(2, [((0, 0), 1e4)], 10)
    stabilize(s, lift_every=lift_every)
    assert np.abs(s.u.values - run_1e4.u.values).max() <= 1e-9 * run_1e4.u.values.max()


@pytest.mark.parametrize("kind", ["random_infinitive", "priority_excess"])
def test_schedules_agree(kind, run_1e4):
    s = new_state(2, [((0, 0), 1e4)], 10)
    stabilize(s, Schedule(kind, seed=3))
    assert np.abs(s.u.values - run_1e4.u.values).max() <= 1e-6 * run_1e4.u.values.max()


def test_threads_are_bit_identical():
    a, b = new_state(2, [((0, 0), 2e4)], 7), new_state(2, [((0, 0), 2e4)], 7)
    stabilize(a, threads=1)
    stabilize(b, threads=4)
    assert a.u.values.tobytes() == b.u.values.tobytes()
    assert a.mu.values.tobytes() == b.mu.values.tobytes()


def test_env_var_sets_threads(monkeypatch):
    monkeypatch.setenv("SANDPILE_THREADS", "3")
    assert engine.resolve_threads(None) == 3
    assert engine.resolve_threads(2) == 2
    monkeypatch.delenv("SANDPILE_THREADS")
    assert engine.resolve_threads(None) == 1


def test_odometer_never_decreases():
    s = new_state(2, [((0, 0), 5e3)], 5)
    previous = s.u.copy()
    for _ in range(500):
        try:
            stabilize(s, max_topplings=20_000, lift_every=2)
            done = True
        except NonConvergence:
            done = False
        if previous.radius < s.radius:
            previous = engine.lattice.grow(previous, s.radius)
        assert np.all(s.u.values >= previous.values)
        previous = s.u.copy()
        if done:
            break
    assert done


def _check_invariants(s):
    n, m, d = s.n, s.m, s.dim
    eps = s.eps_stop
    assert abs(engine.total_mass(s) - n) <= 1e-9 * n
    assert engine.laplacian_defect(s) <= 1e-9 * max(m, 1.0)
    assert s.mu.values.max() <= m + eps
    core = s.u.values > s.kappa
    assert s.mu.values[core].max(initial=0.0) <= 2 * d * eps
    assert s.u.values.min() >= 0
    count, bound = engine.boundary_count_bound(s)
    assert count <= bound
    # odometer equations: Δu + μ0 ≤ m everywhere, = m on {0 < u ≤ κ}, = 0 on {u > κ}
    lap = engine.lattice.laplacian_array(s.u.values) + s.mu0.values
    tol = 1e-9 * max(m, 1.0) + 2 * d * eps
    assert lap.max() <= m + tol
    # a site with 0 < u ≤ κ only ever toppled by rule (a), so it keeps exactly m
    mid = (s.u.values > 0) & ~core
    assert np.all(np.abs(lap[mid] - m) <= tol)
    assert np.all(np.abs(lap[core]) <= tol)


@given(
    d=st.sampled_from([2, 3]),
    masses=st.lists(st.floats(1.0, 2e3), min_size=1, max_size=3),
    m=st.floats(0.5, 20.0),
    offset=st.integers(0, 6),
)
def test_invariants_on_random_configurations(d, masses, m, offset):
    sources = [((i * offset,) + (0,) * (d - 1), mass) for i, mass in enumerate(masses)]
    s = new_state(d, sources, m)
    stabilize(s)
    _check_invariants(s)


def test_invariants_n1e5(run_1e5):
    _check_invariants(run_1e5)


def test_regions_of_trivial_state():
    s = new_state(2, [((0, 0), 3.0)], 10)
    r = engine.regions(s)
    np.testing.assert_array_equal(r.V, s.mu0.values > 0)
    assert not r.V0.any()


def test_regions_partition_and_mass_on_annulus(run_1e5):
    s = run_1e5
    r = engine.regions(s)
    assert not np.any(r.V0 & r.V1)
    np.testing.assert_array_equal(r.V0 | r.V1, r.V | r.V0)
    assert np.all(s.mu.values[r.V1 & (s.mu.values > s.eps_stop)] <= s.m + s.eps_stop)
    on_annulus = math.fsum(s.mu.values[r.V1])
    assert on_annulus == pytest.approx(s.n, rel=1e-9)


def test_boundary_bound_arithmetic():
    s = new_state(2, [((0, 0), 1e4)], 10)
    assert engine.boundary_count_bound(s)[1] == 16000
    s = new_state(2, [((0, 0), 1e6)], 100)
    assert engine.boundary_count_bound(s)[1] == 160000


def test_checkpoint_round_trip(tmp_path, run_1e4):
    csv_path, json_path = engine.save_checkpoint(run_1e4, tmp_path / "run")
    meta = __import__("json").loads(json_path.read_text())
    assert {"d", "n", "m", "kappa", "eps_stop", "schedule", "sweeps", "residual_excess"} <= set(meta)
    s = engine.load_checkpoint(tmp_path / "run")
    big = max(s.radius, run_1e4.radius)
    a = engine.lattice.grow(s.u, big + 1).values
    b = engine.lattice.grow(run_1e4.u, big + 1).values
    np.testing.assert_array_equal(a, b)
    assert s.kappa == run_1e4.kappa and s.sweeps == run_1e4.sweeps
