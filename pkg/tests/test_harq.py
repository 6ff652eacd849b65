import math

import numpy as np
import pytest

from harq_effcap.channel import ChannelModel, EstimatorConfig, HopSpec, Protocol, outage_series_quadrature
from harq_effcap.harq import (
    HarqChain,
    build_chain,
    chain_from_series,
    goodput,
    transition_matrix,
)

RAYLEIGH_16 = ChannelModel(mean_power=16.0, snr=1.0)


def make_chain(p, bits=720.0, tb=180) -> HarqChain:
    return HarqChain(rounds=len(p), packet_bits=bits, block_symbols=tb, p=tuple(p))


def test_t1_chain_has_identical_transition_probs():
    hop = HopSpec(protocol=Protocol.T1, links=(RAYLEIGH_16,), block_symbols=180, packet_bits=720.0)
    chain = build_chain(hop, 5)
    assert len(set(round(pm, 12) for pm in chain.p)) == 1


def test_zero_rate_chain_never_fails():
    hop = HopSpec(protocol=Protocol.IR, links=(RAYLEIGH_16,), block_symbols=180, packet_bits=0.0)
    chain = build_chain(hop, 4, EstimatorConfig(samples=1000, seed=3))
    assert chain.p == (0.0, 0.0, 0.0, 0.0)
    assert chain.pout == 0.0


def test_ir_chain_outage_matches_convolution_oracle():
    hop = HopSpec(protocol=Protocol.IR, links=(RAYLEIGH_16,), block_symbols=180, packet_bits=720.0)
    est = EstimatorConfig(samples=600_000, seed=12)
    chain = build_chain(hop, 4, est)
    oracle = outage_series_quadrature(hop, 4)[4]
    se = math.sqrt(oracle * (1.0 - oracle) / est.samples)
    assert abs(chain.pout - oracle) < 4 * se + 1e-6


def test_chain_zero_denominator_truncates():
    chain = chain_from_series([1.0, 0.5, 0.0, 0.0], 100.0, 10)
    assert chain.p == (0.5, 0.0, 0.0)
    assert chain.pout == 0.0


def test_chain_ratio_floor_guard():
    chain = chain_from_series([1.0, 1e-14, 5e-15], 100.0, 10)
    assert chain.p[0] == pytest.approx(1e-14)
    assert chain.p[1] == 1.0  # denominator below the floor: flagged, pinned to 1
    assert chain.floored_rounds == (1,)
    assert chain.degraded


def test_series_reconstruction_is_consistent():
    series = [1.0, 0.61, 0.081, 0.0056, 0.00026]
    chain = chain_from_series(series, 720.0, 180)
    rebuilt = chain.pout_series
    for m in range(len(chain.p)):
        assert rebuilt[m + 1] == rebuilt[m] * chain.p[m]  # exact by construction
    assert np.allclose(rebuilt, series, rtol=1e-12)


def test_transition_matrix_single_state():
    chain = make_chain([0.3])
    assert np.array_equal(transition_matrix(chain), np.array([[1.0]]))


def test_transition_matrix_layout_and_column_sums():
    chain = make_chain([0.5, 0.4, 0.3])
    mat = transition_matrix(chain)
    assert mat[1, 0] == 0.5
    assert mat[2, 1] == 0.4
    assert mat[0, 2] == 1.0  # last column returns all mass to state 0
    assert mat[0, 0] == 0.5
    assert np.allclose(mat.sum(axis=0), 1.0)


def test_transition_matrix_spectral_radius_is_one():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m = int(rng.integers(1, 7))
        chain = make_chain(rng.uniform(0.01, 0.99, size=m))
        radius = max(abs(np.linalg.eigvals(transition_matrix(chain))))
        assert radius == pytest.approx(1.0, abs=1e-10)


def test_goodput_examples():
    perfect = make_chain([0.0, 0.0], bits=720.0, tb=180)
    assert goodput(perfect) == pytest.approx(720.0 / 180.0)
    hopeless = make_chain([1.0, 1.0])
    assert goodput(hopeless) == 0.0
    half = make_chain([0.5, 0.5], bits=720.0, tb=180)
    assert goodput(half) == pytest.approx(720.0 / (2 * 180.0))  # 0.75 / 1.5 = 1/2


def test_goodput_bounded_and_monotone_in_failures():
    rng = np.random.default_rng(123)
    for _ in range(20):
        m = int(rng.integers(2, 7))
        p = rng.uniform(0.05, 0.95, size=m)
        chain = make_chain(p)
        assert goodput(chain) <= chain.packet_bits / chain.block_symbols + 1e-12
        k = int(rng.integers(0, m))
        worse = list(p)
        worse[k] = min(1.0, worse[k] + 0.04)
        assert goodput(make_chain(worse)) < goodput(chain)


def test_stationary_distribution_matches_expected_transmissions():
    # mean rounds per packet equals both 1/pi_0 and the outage-series sum
    rng = np.random.default_rng(5)
    for _ in range(10):
        m = int(rng.integers(2, 7))
        chain = make_chain(rng.uniform(0.05, 0.95, size=m))
        mat = transition_matrix(chain)
        vals, vecs = np.linalg.eig(mat)
        pi = np.real(vecs[:, np.argmax(np.real(vals))])
        pi = pi / pi.sum()
        expected_rounds = sum(chain.pout_series[:-1])
        assert 1.0 / pi[0] == pytest.approx(expected_rounds, rel=1e-9)


def test_json_round_trip():
    chain = chain_from_series([1.0, 0.61, 0.081, 0.0056, 0.00026], 720.0, 180)
    again = HarqChain.from_json(chain.to_json())
    assert again == chain


def test_chain_validation():
    with pytest.raises(ValueError):
        make_chain([])
    with pytest.raises(ValueError):
        make_chain([1.2])
    with pytest.raises(ValueError):
        chain_from_series([0.9, 0.5], 10.0, 1)  # series must start at 1
