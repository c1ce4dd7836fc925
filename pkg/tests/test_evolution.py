import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvnsim.evolution import (
    KrylovConvergenceError,
    classical_observable,
    compare,
    convergence_sweep,
    evolve,
    expm_krylov,
    output_series,
)
from kvnsim.fock import FockBasis, ObservableSpec, StateVector, encode_observable, encode_position, monomial_observable
from kvnsim.hamiltonian import build_hamiltonian
from kvnsim.models import HarmonicSpec, KuramotoSpec, make_harmonic, make_kuramoto
from kvnsim.ode import Interaction, OdeSystem, Trajectory, random_system
from oracles import dense_propagator

ROT = OdeSystem(2, (Interaction.from_dict({0: 1.0, 1: -1.0}),))
X1 = ObservableSpec(1, (({0: 1}, 1.0),))


def unit(basis, occ):
    v = np.zeros(basis.dim)
    v[basis.index_of(occ)] = 1.0
    return StateVector(v, basis)


def test_zero_hamiltonian_is_identity():
    basis = FockBasis(2, 0)
    H = build_hamiltonian(ROT, basis)
    res = evolve(H, StateVector(np.array([0.7]), basis), [0.0, 1.0, 5.0])
    assert np.all(res.states == 0.7)


def test_rotation_quarter_turn():
    basis = FockBasis(2, 1)
    H = build_hamiltonian(ROT, basis)
    res = evolve(H, unit(basis, [1, 0]), [math.pi / 2])
    psi = res.states[-1]
    assert abs(psi[basis.index_of([0, 1])]) == pytest.approx(1.0, abs=1e-10)
    assert abs(psi[basis.index_of([1, 0])]) <= 1e-10


def test_rotation_follows_classical_sign():
    basis = FockBasis(2, 1)
    H = build_hamiltonian(ROT, basis)
    res = evolve(H, unit(basis, [1, 0]), [0.3])
    psi = res.states[-1]
    assert psi[basis.index_of([1, 0])] == pytest.approx(math.cos(0.3))
    assert psi[basis.index_of([0, 1])] == pytest.approx(-math.sin(0.3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(1, 4), st.floats(0.1, 3.0))
def test_matches_dense_exponential(seed, n, m, t):
    rng = np.random.default_rng(seed)
    basis = FockBasis(n, m)
    if basis.dim > 200:
        return
    sys = random_system(rng, n, min(n, 4), max_coupling=2.0)
    H = build_hamiltonian(sys, basis)
    psi0 = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    psi0 /= np.linalg.norm(psi0)
    res = evolve(H, StateVector(psi0, basis), [0.0, t], tol=1e-11)
    exact = dense_propagator(H.toarray(), t) @ psi0
    assert np.max(np.abs(res.states[-1] - exact)) <= 1e-9


def test_semigroup_property():
    rng = np.random.default_rng(5)
    sys = random_system(rng, 4, 3)
    basis = FockBasis(4, 4)
    H = build_hamiltonian(sys, basis)
    psi0, _ = encode_position(basis, rng.uniform(-1, 1, 4))
    once = evolve(H, psi0, [1.7]).states[-1]
    half = evolve(H, psi0, [0.6]).state(-1)
    twice = evolve(H, half, [1.1]).states[-1]
    assert np.max(np.abs(once - twice)) <= 1e-9


def test_unitarity_and_reality():
    sys, x0 = make_kuramoto(KuramotoSpec.all_to_all((1.0, 1.3), 0.5, (0.4, -0.3)))
    basis = FockBasis(8, 4)
    H = build_hamiltonian(sys, basis)
    psi0, _ = encode_position(basis, x0)
    res = evolve(H, psi0, np.linspace(0, 3, 7))
    assert np.max(res.norm_drift) <= 1e-9
    assert not np.iscomplexobj(res.states)


def test_sector_norms_constant_for_linear_systems():
    spec = HarmonicSpec((1.0, 2.0), ((1.0, 0.5), (0.5, 2.0)))
    sys, tr = make_harmonic(spec)
    basis = FockBasis(sys.n_vars, 3)
    H = build_hamiltonian(sys, basis)
    psi0, _ = encode_position(basis, tr.to_system([0.4, -0.1], [0.2, 0.3]))
    res = evolve(H, psi0, np.linspace(0, 4, 9))
    sectors = np.array([res.state(k).sector_norms() for k in range(len(res.times))])
    assert np.max(np.abs(sectors - sectors[0])) <= 1e-9


def test_tolerance_range():
    basis = FockBasis(2, 1)
    H = build_hamiltonian(ROT, basis)
    with pytest.raises(ValueError):
        evolve(H, unit(basis, [1, 0]), [1.0], tol=1e-3)


def test_substep_limit_reported():
    basis = FockBasis(6, 4)
    sys = random_system(np.random.default_rng(1), 6, 4, max_coupling=5.0)
    A = build_hamiltonian(sys, basis).generator
    v = np.ones(basis.dim)
    with pytest.raises(KrylovConvergenceError) as err:
        expm_krylov(A, v, 50.0, tol=1e-12, krylov_dim=3, max_substeps=5)
    assert err.value.achieved > 0


def test_output_series_examples():
    basis = FockBasis(2, 3)
    H = build_hamiltonian(ROT, basis)
    x0 = np.array([0.6, 0.3])
    psi0, L = encode_position(basis, x0)
    res = evolve(H, psi0, [0.0])
    c = encode_observable(basis, X1)
    q = output_series(res, c, L)
    assert q.values[0] == pytest.approx(math.sqrt(2) / math.sqrt(math.pi) * 0.6, abs=1e-12)
    assert output_series(res, psi0, L).values[0] == pytest.approx(math.sqrt(L))
    ortho = encode_observable(basis, ObservableSpec(3, (({0: 3}, 1.0),)))
    orth_state = StateVector(np.where(psi0.amplitudes == 0, ortho.amplitudes, 0.0), basis)
    assert output_series(res, orth_state, L).values[0] == 0.0


def test_output_series_rejects_imaginary():
    basis = FockBasis(2, 1)
    H = build_hamiltonian(ROT, basis)
    res = evolve(H, StateVector(np.array([0, 1j, 0]), basis), [0.0])
    with pytest.raises(ValueError):
        output_series(res, StateVector(np.array([0.0, 1.0, 0.0]), basis), 1.0)


def test_classical_observable_examples():
    t = np.linspace(0, 2, 5)
    traj = Trajectory(t, np.stack([np.cos(t), -np.sin(t)], axis=1), 0, 0, 0, 0.0)
    g = classical_observable(traj, X1)
    assert np.allclose(g, math.sqrt(2 / math.pi) * np.cos(t))
    vac = classical_observable(traj, ObservableSpec(0, (({}, 1.0),)))
    # p_0 = pi^{-1/4}, so the vacuum term is constant
    assert np.allclose(vac, math.pi**-0.5)
    assert np.all(classical_observable(traj, ObservableSpec(1, (({0: 1}, 0.0),))) == 0)


def test_monomial_observable_values():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, (6, 3))
    traj = Trajectory(np.arange(6.0), pts, 0, 0, 0, 0.0)
    for powers in ({0: 1}, {1: 2}, {0: 1, 2: 3}):
        obs = monomial_observable(3, powers, 1.5)
        expected = 1.5 * np.prod([pts[:, i] ** k for i, k in powers.items()], axis=0)
        assert np.allclose(classical_observable(traj, obs), expected, atol=1e-13)
        assert obs.degree_cap == sum(powers.values())


def test_compare_rotation_linear_exact():
    table = compare(ROT, [0.6, 0.3], X1, 1, 2 * math.pi, 40)
    assert table.max_error <= 1e-8
    assert len(table.times) == 41
    assert np.array_equal(table.abs_error, np.abs(table.quantum - table.classical))


def test_compare_zero_horizon():
    table = compare(ROT, [0.6, 0.3], X1, 3, 0.0, 1)
    assert np.all(table.abs_error <= 1e-12)


def test_compare_requires_degree():
    with pytest.raises(ValueError):
        compare(ROT, [0.6, 0.3], ObservableSpec(2, (({0: 2}, 1.0),)), 1, 1.0, 4)


def test_kuramoto_error_drops_with_m():
    sys, x0 = make_kuramoto(KuramotoSpec.all_to_all((1.0, 1.3), 0.5))
    e4 = compare(sys, x0, X1, 4, 1.0, 20).max_error
    e6 = compare(sys, x0, X1, 6, 1.0, 20).max_error
    assert e6 < e4


def test_sweep_linear_all_small():
    spec = HarmonicSpec((1.0, 1.5), ((2.0, 0.7), (0.7, 1.0)))
    sys, tr = make_harmonic(spec)
    x0 = tr.to_system([0.5, -0.3], [0.0, 0.4])
    table = convergence_sweep(sys, x0, tr.position_observable(0), 3.0, [1, 2, 3], steps=12)
    assert np.all(table.max_error <= 1e-8)
    assert list(table.dim) == [math.comb(sys.n_vars + m, m) for m in (1, 2, 3)]
    assert np.array_equal(table.max_error, [t.max_error for t in table.tables])


def test_sweep_threads_match_serial():
    sys, x0 = make_kuramoto(KuramotoSpec.all_to_all((1.0, 1.3), 0.5))
    a = convergence_sweep(sys, x0, X1, 0.5, [1, 2, 3], steps=5)
    b = convergence_sweep(sys, x0, X1, 0.5, [1, 2, 3], steps=5, max_workers=3)
    assert np.array_equal(a.max_error, b.max_error)
    with pytest.raises(ValueError):
        convergence_sweep(sys, x0, X1, 0.5, [3, 2])


def test_csv_outputs_are_deterministic():
    a = compare(ROT, [0.6, 0.3], X1, 2, 1.0, 5).to_csv()
    b = compare(ROT, [0.6, 0.3], X1, 2, 1.0, 5).to_csv()
    assert a == b
    assert a.splitlines()[0] == "t,quantum,classical,abs_error,norm_drift,L_drift"
    sweep = convergence_sweep(ROT, [0.6, 0.3], X1, 1.0, [1, 2], steps=3)
    assert sweep.to_csv().splitlines()[0] == "m,max_error,dim,build_seconds,evolve_seconds"
    assert sweep.to_csv(timings=False) == convergence_sweep(ROT, [0.6, 0.3], X1, 1.0, [1, 2], steps=3).to_csv(timings=False)


def test_physical_observable_through_transform():
    spec = HarmonicSpec((1.0,), ((1.0,),))
    sys, tr = make_harmonic(spec)
    x0 = tr.to_system([0.5], [0.0])
    table = compare(sys, x0, tr.position_observable(0), 1, math.pi, 8)
    assert np.allclose(table.classical, 0.5 * np.cos(table.times), atol=1e-9)
    assert table.max_error <= 1e-8
