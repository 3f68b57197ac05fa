import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from crs_maxmin.channel import ChannelRealization, SystemConfig, generate_channels
from crs_maxmin.rates import (InfeasibleSplitError, PrecoderSet, achievable_common_rate, common_rate_coop,
                              common_rate_direct, crossover_for, evaluate_solution, private_rate_direct,
                              rate_breakdown, theta_crossover)
from crs_maxmin.relay import RelayGrouping

from conftest import scalar_channels

S3 = math.sqrt(3.0)


def P(common, *private):
    return PrecoderSet(np.array([common], dtype=complex), np.array([list(private)], dtype=complex))


# hand-evaluated oracles
def test_private_rate_single_stream():
    ch = scalar_channels(1.0, 0.0)
    assert private_rate_direct(ch, P(0, 1, 0), 0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_private_rate_ignores_common_stream():
    ch = scalar_channels(1.0, 0.0)
    got = private_rate_direct(ch, P(10, S3, 1), 0, 1.0)
    assert got == pytest.approx(math.log2(2.5), abs=1e-12)
    assert got == pytest.approx(1.32193, abs=1e-5)


def test_zero_slot_gives_zero_rate():
    ch = scalar_channels(1.0, 0.5)
    assert private_rate_direct(ch, P(1, 1, 1), 0, 0.0) == 0.0
    assert common_rate_direct(ch, P(1, 1, 1), 1, 0.0) == 0.0


def test_common_rate_treats_all_private_as_noise():
    ch = scalar_channels(1.0, 0.0)
    assert common_rate_direct(ch, P(S3, 1, 0), 0, 1.0) == pytest.approx(math.log2(2.5), abs=1e-12)
    assert common_rate_direct(ch, P(0, 1, 0), 0, 1.0) == 0.0


def test_common_rate_linear_in_theta():
    ch = scalar_channels(0.7, 1.1)
    p = P(1.3, 0.4, -0.2)
    assert common_rate_direct(ch, p, 1, 0.5) == 0.5 * common_rate_direct(ch, p, 1, 1.0)


def _coop_channels(K, links):
    G = np.zeros((K, K), dtype=complex)
    for (k, j), v in links.items():
        G[k, j] = v
    return ChannelRealization.from_arrays(np.ones((1, K)), G)


def test_coop_rate_single_relay():
    ch = _coop_channels(2, {(1, 0): S3})
    assert common_rate_coop(ch, [0], [1.0, 1.0], 1, 0.5) == pytest.approx(1.0, abs=1e-12)
    assert common_rate_coop(ch, [0], [1.0, 1.0], 1, 1.0) == 0.0


def test_coop_powers_add_inside_log():
    ch = _coop_channels(3, {(2, 0): 1.0, (2, 1): math.sqrt(2.0)})
    theta = 0.3
    assert common_rate_coop(ch, [0, 1], [1.0] * 3, 2, theta) == pytest.approx(0.7 * math.log2(4), abs=1e-12)


def test_coop_rate_rejects_relay_receiver():
    ch = _coop_channels(2, {(1, 0): 1.0})
    with pytest.raises(ValueError):
        common_rate_coop(ch, [0], [1.0, 1.0], 0, 0.5)


def test_achievable_common_rate_examples():
    assert achievable_common_rate([2.0, 0.5], [2.0, 1.5], [0], [1]) == (2.0, 1.5, 1.5)
    assert achievable_common_rate([0.8] * 3, [0.8] * 3, [0], [1, 2]) == (0.8, 0.8, 0.8)
    with pytest.raises(ValueError):
        achievable_common_rate([1.0, 1.0], [1.0, 1.0], [0, 1], [])


def test_zero_split_totals_equal_private():
    ch = generate_channels(SystemConfig(3, 2, 10.0), 1)
    p = PrecoderSet(np.ones(2), np.ones((2, 3)) * 0.5)
    b = rate_breakdown(ch, p, 0.7, np.zeros(3), RelayGrouping((0,), (1, 2)), np.full(3, 10.0))
    np.testing.assert_array_equal(b.totals, b.private_direct)


def test_evaluate_solution_flags_infeasible_split():
    ch = scalar_channels(1.0, 1.0)
    sol = SimpleNamespace(precoders=P(S3, 0, 0), common_split=np.array([1.5, 1.0]), theta=1.0)
    with pytest.raises(InfeasibleSplitError) as err:
        evaluate_solution(ch, None, sol)
    assert err.value.violation == pytest.approx(2.5 - 2.0, abs=1e-12)
    ok = SimpleNamespace(precoders=P(S3, 0, 0), common_split=np.array([1.0, 1.0]), theta=1.0)
    assert evaluate_solution(ch, None, ok).maxmin_rate == pytest.approx(1.0, abs=1e-12)


def test_negative_split_rejected():
    ch = scalar_channels(1.0, 1.0)
    sol = SimpleNamespace(precoders=P(S3, 0, 0), common_split=np.array([-0.1, 0.1]), theta=1.0)
    with pytest.raises(InfeasibleSplitError):
        evaluate_solution(ch, None, sol)


def test_crossover_examples():
    assert theta_crossover(2.0, 1.0, 3.0) == pytest.approx(0.75, abs=1e-15)
    assert theta_crossover(1.5, 1.5, 2.0) == 1.0
    with pytest.raises(ValueError):
        theta_crossover(1.0, 3.0, 1.0)


def test_group_rates_meet_at_crossover():
    ch = generate_channels(SystemConfig(3, 2, 10.0, bs_variances=(1.0, 0.3, 0.1)), 4)
    g = RelayGrouping((0,), (1, 2))
    p = PrecoderSet(np.array([1.0, 0.5j]), np.full((2, 3), 0.3))
    powers = np.full(3, 10.0)
    gamma = crossover_for(ch, p, g, powers)
    rc1, rc2 = rate_breakdown(ch, p, gamma, np.zeros(3), g, powers).group_common
    assert rc1 == pytest.approx(rc2, abs=1e-9)


def _cn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), theta=st.floats(0.0, 1.0), K=st.integers(2, 5))
def test_rates_nonnegative_and_bounded_by_interference_free(seed, theta, K):
    rng = np.random.default_rng(seed)
    ch = ChannelRealization.from_arrays(_cn(rng, 2, K), _cn(rng, K, K))
    p = PrecoderSet(_cn(rng, 2), _cn(rng, 2, K))
    for k in range(K):
        r = private_rate_direct(ch, p, k, theta)
        free = theta * math.log2(1 + abs(np.vdot(ch.h(k), p.private[:, k])) ** 2)
        assert 0.0 <= r <= free + 1e-12
        assert common_rate_direct(ch, p, k, theta) >= 0.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), t1=st.floats(0.0, 1.0), t2=st.floats(0.0, 1.0))
def test_group_rate_monotone_in_theta(seed, t1, t2):
    # R_c1 rises with theta, cooperative term falls
    assume(t1 < t2)
    rng = np.random.default_rng(seed)
    ch = ChannelRealization.from_arrays(_cn(rng, 2, 3), _cn(rng, 3, 3))
    p = PrecoderSet(_cn(rng, 2), _cn(rng, 2, 3))
    g, pw = RelayGrouping((0,), (1, 2)), np.ones(3)
    a = rate_breakdown(ch, p, t1, np.zeros(3), g, pw)
    b = rate_breakdown(ch, p, t2, np.zeros(3), g, pw)
    assert a.group_common[0] <= b.group_common[0] + 1e-12
    assert np.all(a.common_coop >= b.common_coop - 1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_crossover_is_where_group_rates_meet(seed):
    rng = np.random.default_rng(seed)
    ch = ChannelRealization.from_arrays(_cn(rng, 2, 4), _cn(rng, 4, 4))
    p = PrecoderSet(_cn(rng, 2), _cn(rng, 2, 4))
    g, pw = RelayGrouping((0, 1), (2, 3)), np.full(4, 3.0)
    try:
        gamma = crossover_for(ch, p, g, pw)
    except ValueError:
        return
    rc1, rc2 = rate_breakdown(ch, p, gamma, np.zeros(4), g, pw).group_common
    # the lines may meet beyond theta = 1 when the worst relay is the weaker decoder
    assert gamma > 0.0
    assert rc1 == pytest.approx(rc2, abs=1e-9)
