import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvnsim.estimator import (
    block_encoding_cost,
    classical_baseline,
    estimate,
    query_function,
    select_truncation,
    simulation_query_count,
    truncation_constant,
    verify_truncation,
)
from kvnsim.models import KuramotoSpec, make_kuramoto
from kvnsim.ode import Interaction, OdeSystem, random_system

ROT = OdeSystem(2, (Interaction.from_dict({0: 1.0, 1: -1.0}),))


def test_rotation_truncation_frozen():
    p = select_truncation(ROT, 1, 1e-3, 1.0)
    assert truncation_constant(ROT) == 8.0
    assert (p.n0, p.m) == (55, 111)
    assert p.delta == 8.0 * 111**2


def test_e4_floor():
    sys = random_system(np.random.default_rng(0), 5, 3)
    assert select_truncation(sys, 1, 0.5, 1e-3).n0 >= 55


def test_eps_range():
    for eps in (0.0, 1.0, -1e-3):
        with pytest.raises(ValueError):
            select_truncation(ROT, 1, eps, 1.0)
    with pytest.raises(ValueError):
        select_truncation(ROT, 0, 1e-3, 1.0)


def test_tenfold_eps_adds_at_most_three():
    prev = select_truncation(ROT, 1, 1e-30, 1.0).n0
    for k in range(31, 60):
        cur = select_truncation(ROT, 1, 10.0**-k, 1.0).n0
        assert 0 <= cur - prev <= 3
        prev = cur


def test_block_encoding_examples():
    kur, _ = make_kuramoto(KuramotoSpec.all_to_all((1.0, 1.3), 0.5))
    assert (kur.c, kur.d) == (5, 4)
    assert block_encoding_cost(kur, 6).sparsity == 480
    assert block_encoding_cost(kur, 6, n_vars=1024).qubits == 63
    assert block_encoding_cost(ROT, 2).subnormalization == 2.0


def test_query_count_examples():
    est = simulation_query_count(ROT, 2, 1.0, 1e-3)
    assert est.alpha == pytest.approx(8 * math.e, rel=1e-12)
    assert query_function(1e9, 1e-3) / 1e9 == pytest.approx(1.0, rel=1e-7)


def independent_f(at, eps):
    return at + np.log(1 / eps) / np.log(np.e + np.log(1 / eps) / at)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e6), st.floats(1e-14, 0.9), st.floats(1.01, 10))
def test_query_function_monotone(at, eps, factor):
    f = query_function(at, eps)
    assert f == pytest.approx(independent_f(at, eps), rel=1e-12)
    assert query_function(at * factor, eps) >= f
    assert query_function(at, eps**factor) >= f


@st.composite
def estimator_inputs(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(2, 7))
    d = draw(st.integers(2, min(n, 5)))
    scale = 10 ** draw(st.floats(-3, 2))
    sys = random_system(np.random.default_rng(seed), n, d, max_coupling=scale)
    return sys, draw(st.integers(1, 3)), 10 ** draw(st.floats(-14, -0.1)), 10 ** draw(st.floats(-3, 3))


@settings(max_examples=200, deadline=None)
@given(estimator_inputs())
def test_selected_truncation_satisfies_inequalities(inputs):
    sys, b, eps, T = inputs
    p = select_truncation(sys, b, eps, T)
    assert p.m == sys.d * p.n0 + b
    tail, remainder = verify_truncation(sys, p)
    assert tail.holds and remainder.holds


def test_m_affine_in_log_eps():
    kur, _ = make_kuramoto(KuramotoSpec.all_to_all((1.0, 1.3), 0.5))
    logs = np.linspace(60, 200, 50)
    ms = np.array([select_truncation(kur, 1, math.exp(-x), 1.0).m for x in logs])
    slopes = np.diff(ms) / np.diff(logs)
    # ceil jitter: at most d * ceil(step) per step
    assert np.all(np.diff(ms) <= kur.d * np.ceil(np.diff(logs)))
    assert np.polyfit(logs, ms, 1)[0] == pytest.approx(kur.d, rel=0.02)
    assert np.all(slopes >= 0)


def test_pairwise_systems_have_no_remainder():
    _, remainder = verify_truncation(ROT, select_truncation(ROT, 1, 1e-6, 1.0))
    assert remainder.lhs == -math.inf and remainder.holds


def test_estimate_row():
    row = estimate(ROT, 1, 1e-3, 1.0)
    assert row["m"] == 111 and row["dim"] == math.comb(113, 111)
    assert row["classical"] == pytest.approx(classical_baseline(1.0, 2, 1e-3, 4))
    assert row["inequalities_hold"]
    assert classical_baseline(2.0, 3, 1e-4, 4) == pytest.approx(60.0)
