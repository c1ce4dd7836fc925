import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from kvnsim.models import (
    DuffingSpec,
    HarmonicSpec,
    KuramotoSpec,
    kuramoto_constraint_residual,
    kuramoto_phase_recover,
    kuramoto_reference,
    load_model_spec,
    make_duffing,
    make_harmonic,
    make_kuramoto,
    quadratic_invariant,
)
from kvnsim.ode import Trajectory, integrate_reference, rhs, validate_system, weight_drift


def test_single_harmonic_is_rotation():
    sys, tr = make_harmonic(HarmonicSpec((1.0,), ((1.0,),)))
    assert sys.n_vars == 2 and len(sys.interactions) == 1
    assert sorted(sys.interactions[0].couplings) == [-1.0, 1.0]
    assert tr.names == ["X1", "V1"]


def test_two_oscillators_one_edge():
    sys, tr = make_harmonic(HarmonicSpec((1.0, 2.0), ((1.0, 0.5), (0.5, 2.0))))
    assert tr.names == ["X1", "X2", "Y12", "V1", "V2"]
    # one pair per mass-spring plus one per edge endpoint
    assert len(sys.interactions) == 4
    assert all(p.size == 2 for p in sys.interactions)
    assert validate_system(sys).ok


def test_harmonic_matches_newtonian_motion():
    masses, k = np.array([1.0, 2.0, 0.5]), np.array([[1.0, 0.5, 0.0], [0.5, 2.0, 0.3], [0.0, 0.3, 1.5]])
    spec = HarmonicSpec(tuple(masses), tuple(map(tuple, k)))
    sys, tr = make_harmonic(spec)
    x0, v0 = np.array([0.3, -0.2, 0.1]), np.array([0.1, 0.4, -0.3])

    def newton(_t, u):
        x, v = u[:3], u[3:]
        acc = [sum(k[j, l] * (x[l] - x[j]) for l in range(3) if l != j) - k[j, j] * x[j] for j in range(3)]
        return np.concatenate([v, np.array(acc) / masses])

    grid = np.linspace(0, 10, 41)
    ref = solve_ivp(newton, (0, 10), np.concatenate([x0, v0]), t_eval=grid, rtol=1e-12, atol=1e-12)
    traj = integrate_reference(sys, tr.to_system(x0, v0), 10, 1e-10, grid)
    x, v = tr.from_system(traj.points)
    assert np.allclose(x, ref.y[:3].T, atol=1e-8) and np.allclose(v, ref.y[3:].T, atol=1e-8)
    energy = quadratic_invariant(traj.points)
    assert np.max(np.abs(energy - energy[0])) <= 1e-8


def test_harmonic_spec_errors():
    with pytest.raises(ValueError):
        HarmonicSpec((0.0,), ((1.0,),))
    with pytest.raises(ValueError):
        HarmonicSpec((1.0,), ((0.0,),))
    with pytest.raises(ValueError):
        HarmonicSpec((1.0, 1.0), ((1.0, 0.2), (0.3, 1.0)))


def test_duffing_chain_is_valid_cubic():
    sys, tr = make_duffing(DuffingSpec.chain(3))
    assert validate_system(sys).ok and sys.d == 3
    assert len(tr.names) == 3 + 3 + 2 + 2 + 3


def test_duffing_matches_newtonian_motion():
    spec = DuffingSpec((1.0, 2.0, 0.7), (1.0, 0.5, 2.0), (0.2, 0.1, 0.3), {(0, 1): (1.0, 0.15), (1, 2): (0.4, 0.05)})
    sys, tr = make_duffing(spec)
    x0, v0 = np.array([0.3, -0.2, 0.5]), np.array([0.1, 0.4, -0.2])

    def newton(_t, u):
        x, v = u[:3], u[3:]
        f = -np.array(spec.kappa) * x - 2 * np.array(spec.lam) * x**3
        for (j, l), (ke, le) in spec.edges.items():
            d = x[j] - x[l]
            f[j] -= ke * d + 2 * le * d**3
            f[l] += ke * d + 2 * le * d**3
        return np.concatenate([v, f / np.array(spec.masses)])

    grid = np.linspace(0, 10, 41)
    ref = solve_ivp(newton, (0, 10), np.concatenate([x0, v0]), t_eval=grid, rtol=1e-12, atol=1e-12)
    traj = integrate_reference(sys, tr.to_system(x0, v0), 10, 1e-10, grid)
    x, v = tr.from_system(traj.points)
    assert np.allclose(x, ref.y[:3].T, atol=1e-8) and np.allclose(v, ref.y[3:].T, atol=1e-8)
    total = quadratic_invariant(traj.points)
    assert np.max(np.abs(total - total[0])) <= 1e-8


def test_duffing_single_site_small_lambda():
    lam = 1e-9
    sys, tr = make_duffing(DuffingSpec((1.0,), (1.0,), (lam,)))
    z = np.array([0.7, 0.2, -0.4])  # X, Y, V
    F = rhs(sys, z)
    g = 2 * math.sqrt(lam)
    # harmonic part plus couplings that vanish with lambda
    assert F[0] == pytest.approx(-0.4)
    assert F[2] == pytest.approx(-0.7 - g * 0.7 * 0.2)
    assert F[1] == pytest.approx(g * 0.7 * -0.4)
    assert abs(F[2] + 0.7) < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_duffing_weight_drift_zero(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    edges = {(j, j + 1): tuple(rng.uniform(0.1, 2, 2)) for j in range(n - 1)}
    spec = DuffingSpec(tuple(rng.uniform(0.5, 2, n)), tuple(rng.uniform(0.5, 2, n)), tuple(rng.uniform(0.05, 1, n)), edges)
    sys, _ = make_duffing(spec)
    x = rng.uniform(-2, 2, (50, sys.n_vars))
    assert np.max(np.abs(weight_drift(sys, x))) <= 1e-12 * max(1.0, np.max(np.abs(x * rhs(sys, x))))


def test_duffing_spec_errors():
    with pytest.raises(ValueError):
        DuffingSpec((1.0,), (1.0,), (0.0,))
    with pytest.raises(ValueError):
        DuffingSpec((1.0, 1.0), (1.0, 1.0), (1.0, 1.0), {(0, 0): (1.0, 1.0)})
    with pytest.raises(ValueError):
        DuffingSpec((1.0, 1.0), (1.0, 1.0), (1.0, 1.0), {(0, 1): (1.0, 1.0), (1, 0): (2.0, 1.0)})


def test_kuramoto_structure():
    spec = KuramotoSpec.all_to_all((1.0, 1.3), 0.5, (0.2, 1.1))
    sys, x0 = make_kuramoto(spec)
    report = validate_system(sys)
    assert report.ok and report.d == 4 and report.eta == pytest.approx(max(1.3, 0.25))
    assert np.allclose(x0[:4], [math.cos(0.2), math.sin(0.2), -math.cos(0.2), -math.sin(0.2)])
    quads = [p for p in sys.interactions if p.size == 4]
    assert len(quads) == 8 and all(sum(c == 0 for c in p.couplings) == 2 for p in quads)


def test_kuramoto_uncoupled_phase():
    spec = KuramotoSpec((1.0,), 0.0, ((),), (0.0,))
    sys, x0 = make_kuramoto(spec)
    traj = integrate_reference(sys, x0, math.pi / 4, 1e-12)
    assert kuramoto_phase_recover(traj)[-1, 0] == pytest.approx(math.pi / 4, abs=1e-10)


def test_phase_unwrap_is_continuous():
    spec = KuramotoSpec.all_to_all((3.0, 2.0), 0.8)
    sys, x0 = make_kuramoto(spec)
    traj = integrate_reference(sys, x0, 10.0, 1e-10, np.linspace(0, 10, 101))
    theta = kuramoto_phase_recover(traj)
    assert np.all(np.abs(np.diff(theta, axis=0)) < math.pi)
    assert theta[-1, 0] > 2 * math.pi


def test_phase_recover_degenerate():
    pts = np.zeros((2, 4))
    with pytest.raises(ValueError):
        kuramoto_phase_recover(Trajectory(np.array([0.0, 1.0]), pts, 0, 0, 0, 0.0))


def test_kuramoto_reference_examples():
    spec = KuramotoSpec.all_to_all((1.0, 1.3), 0.0, (0.1, 0.2))
    ref = kuramoto_reference(spec, 2.0, 1e-12, np.linspace(0, 2, 5))
    assert np.allclose(ref.points, np.array([0.1, 0.2]) + np.outer(ref.times, [1.0, 1.3]), atol=1e-10)
    twins = KuramotoSpec.all_to_all((1.0, 1.0), 0.7, (0.4, -0.4))
    ref = kuramoto_reference(twins, 5.0, 1e-12, np.linspace(0, 5, 11))
    s = ref.points.sum(axis=1)
    assert np.allclose(s - s[0], 2 * ref.times, atol=1e-9)


@pytest.mark.parametrize(
    "spec",
    [
        KuramotoSpec.all_to_all((1.0, 1.3), 0.8, (0.0, 0.5)),
        KuramotoSpec.ring((1.0, 1.3, 0.7, 0.9), 0.8, (0.2, -0.4, 1.0, 2.0)),
        KuramotoSpec((0.5, 1.5, 1.0), 1.2, ((1,), (2,), ()), (0.0, 1.0, -1.0)),
    ],
)
def test_embedded_kuramoto_matches_phase_equations(spec):
    sys, x0 = make_kuramoto(spec)
    grid = np.linspace(0, 10, 101)
    traj = integrate_reference(sys, x0, 10.0, 1e-10, grid)
    assert np.max(kuramoto_constraint_residual(traj.points)) <= 1e-8
    ref = kuramoto_reference(spec, 10.0, 1e-12, grid)
    assert np.max(np.abs(kuramoto_phase_recover(traj) - ref.points)) <= 1e-6


def test_kuramoto_spec_errors():
    with pytest.raises(ValueError):
        KuramotoSpec((1.0, 1.0), 0.5, ((0,), ()), (0.0, 0.0))
    with pytest.raises(ValueError):
        KuramotoSpec((), 0.5, (), ())
    with pytest.raises(ValueError):
        make_kuramoto(KuramotoSpec((0.0,), 0.0, ((),), (0.0,)))


def test_observables_from_transforms():
    spec = KuramotoSpec.all_to_all((1.0, 1.3), 0.5, (0.3, 0.9))
    sys, x0 = make_kuramoto(spec)
    from kvnsim.evolution import classical_observable
    from kvnsim.models import KuramotoTransform

    tr = KuramotoTransform(spec)
    traj = Trajectory(np.array([0.0]), x0[None, :], 0, 0, 0, 0.0)
    assert classical_observable(traj, tr.cos_observable(1))[0] == pytest.approx(math.cos(0.9))
    assert classical_observable(traj, tr.sin_observable(0))[0] == pytest.approx(math.sin(0.3))


def test_spec_json_round_trip(tmp_path):
    specs = [
        HarmonicSpec((1.0, 2.0), ((1.0, 0.5), (0.5, 2.0))),
        DuffingSpec.chain(3),
        KuramotoSpec.ring((1.0, 1.3, 0.7), 0.8, (0.1, 0.2, 0.3)),
    ]
    for spec in specs:
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec.to_dict()))
        assert load_model_spec(path) == spec
    with pytest.raises(ValueError):
        load_model_spec(path, "pendulum")
