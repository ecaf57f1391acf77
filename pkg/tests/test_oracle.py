import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benns.errors import InvalidArgumentError
from benns.netmodel import build_fat_tree, decode_embedding, genome_shape, make_sfcrs
from benns.oracle import OracleConfig, SimulatedNetwork, oracle_latency, simulate_measure, softplus_sharp
from benns.predictors import GroundTruthUsage, StubUsage
from benns.traffic import linear_ramp

QUIET = OracleConfig(noise_std_ms=0.0)


def test_flat_below_knees():
    assert oracle_latency(0.0, 0.0, 4.0, QUIET) == pytest.approx(14.0, abs=1e-6)
    assert oracle_latency(0.5, 100.0, 4.0, QUIET) == pytest.approx(14.0, abs=1e-3)
    grid = oracle_latency(np.linspace(0, 0.5, 9), np.linspace(0, 150, 9), 0.0, QUIET)
    assert np.ptp(grid) < 1e-3


def test_rises_past_knees():
    base = oracle_latency(0.0, 0.0, 0.0, QUIET)
    assert oracle_latency(1.5, 0.0, 0.0, QUIET) - base == pytest.approx(50.0, abs=1e-3)
    assert oracle_latency(0.0, 275.0, 0.0, QUIET) - base == pytest.approx(100.0, abs=1e-3)


def test_delta_is_exactly_additive():
    a = oracle_latency(1.2, 200.0, 1.0, QUIET)
    assert oracle_latency(1.2, 200.0, 4.0, QUIET) - a == pytest.approx(3.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 3), st.floats(0, 3), st.floats(0, 400), st.floats(0, 400))
def test_monotone_in_alpha_and_beta(a1, a2, b1, b2):
    lo, hi = sorted((a1, a2))
    blo, bhi = sorted((b1, b2))
    assert oracle_latency(lo, blo, 2.0, QUIET) <= oracle_latency(hi, blo, 2.0, QUIET) + 1e-12
    assert oracle_latency(lo, blo, 2.0, QUIET) <= oracle_latency(lo, bhi, 2.0, QUIET) + 1e-12


def test_softplus_sharp_limits():
    assert softplus_sharp(-5.0) == pytest.approx(0.0, abs=1e-12)
    assert softplus_sharp(5.0) == pytest.approx(5.0, abs=1e-9)
    assert softplus_sharp(0.0) == pytest.approx(0.05 * np.log(2))


def test_rejects_negative_inputs_and_bad_config():
    for args in ((-0.1, 0, 0), (0, -1, 0), (0, 0, -1)):
        with pytest.raises(InvalidArgumentError):
            oracle_latency(*args)
    with pytest.raises(InvalidArgumentError):
        OracleConfig(cpu_knee=0)
    with pytest.raises(InvalidArgumentError):
        OracleConfig(noise_std_ms=-1)


def test_noise_statistics():
    rng = np.random.default_rng(0)
    x = oracle_latency(np.zeros(20000), 0.0, 0.0, OracleConfig(), rng) - 10.0
    assert abs(x.mean()) < 0.05 and x.std() == pytest.approx(2.0, rel=0.03)


@pytest.fixture(scope="module")
def embedding():
    topo = build_fat_tree(4, 1.0, 5120.0, 20.0, 1.0)
    sfcrs = make_sfcrs(8)
    rng = np.random.default_rng(2)
    genome = (rng.random(genome_shape(sfcrs, topo)) < 0.2).astype(np.uint8)
    genome[:20, 0] = 1
    return decode_embedding(genome, sfcrs, topo)


def test_measurement_keyed_noise(embedding):
    traffic = linear_ramp(1, 60, 12)
    net = SimulatedNetwork(GroundTruthUsage())
    a = net.measure(embedding, traffic, key=(3, 1))
    b = net.measure(embedding, traffic, key=(3, 1))
    c = net.measure(embedding, traffic, key=(3, 2))
    assert net.n_measurements == 3
    assert np.array_equal(a.latency_ms, b.latency_ms) and not np.array_equal(a.latency_ms, c.latency_ms)
    assert a.latency_ms.shape == (embedding.n_deployed, 12)
    assert a.sfc_ids == tuple(e.request.id for e in embedding.sfcs if e.deployed)
    other = SimulatedNetwork(GroundTruthUsage(), OracleConfig(seed=9)).measure(embedding, traffic, key=(3, 1))
    assert not np.array_equal(a.latency_ms, other.latency_ms)


def test_measurement_follows_demands(embedding):
    traffic = linear_ramp(1, 60, 5)
    m = simulate_measure(embedding, StubUsage(), traffic, QUIET)
    d = m.demands
    dep = np.flatnonzero(d.deployed)
    expect = oracle_latency(d.per_slot(d.alpha)[dep], d.per_slot(d.beta)[dep], d.delta[dep][:, None], QUIET)
    assert np.array_equal(m.latency_ms, expect)


def test_memory_has_no_effect(embedding):
    traffic = linear_ramp(1, 60, 5)

    class HeavyMemory(StubUsage):
        def mem_pred(self, vnf, requests):
            return 1e6 * np.asarray(requests, dtype=float)

    light = simulate_measure(embedding, StubUsage(), traffic, QUIET)
    heavy = simulate_measure(embedding, HeavyMemory(), traffic, QUIET)
    assert (heavy.demands.gamma[heavy.demands.deployed] > 1).any()
    assert np.array_equal(light.latency_ms, heavy.latency_ms)


def test_empty_measurement():
    topo = build_fat_tree(4, 1.0, 1.0, 1.0, 1.0)
    sfcrs = make_sfcrs(4)
    emb = decode_embedding(np.zeros(genome_shape(sfcrs, topo), dtype=np.uint8), sfcrs, topo)
    m = simulate_measure(emb, StubUsage(), linear_ramp(1, 2, 3))
    assert m.empty and np.isnan(m.average_ms) and m.latency_ms.shape == (0, 3)
