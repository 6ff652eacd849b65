import math

import numpy as np
import pytest

from harq_effcap.channel import ChannelModel, EstimatorConfig, HopSpec, Protocol
from harq_effcap.effcap import (
    DelayExponentFn,
    ExponentRangeError,
    RateSearch,
    delay_exponent,
    invert_delay_exponent,
    optimize_L,
    outage_ec_fixed_L,
    root_u,
    t1_infinite_M_ec,
)
from harq_effcap.harq import HarqChain, build_chain, chain_from_series, goodput, transition_matrix
from harq_effcap.solvers import BracketError

RAYLEIGH_16 = ChannelModel(mean_power=16.0, snr=1.0)


def make_chain(p, bits=1.0, tb=1) -> HarqChain:
    return HarqChain(rounds=len(p), packet_bits=bits, block_symbols=tb, p=tuple(p))


def random_chain(rng, rounds=None, bits=1.0, tb=1) -> HarqChain:
    m = int(rng.integers(2, 7)) if rounds is None else rounds
    return make_chain(rng.uniform(0.05, 0.95, size=m), bits=bits, tb=tb)


def spectral_matrix(chain, theta):
    """Transition matrix weighted by the goodput MGF at -theta."""
    mat = transition_matrix(chain)
    pout = chain.pout
    g = pout + (1.0 - pout) * math.exp(-theta * chain.packet_bits)
    mat[:, 0] *= g
    return mat


def power_iteration(mat, iters=20_000, tol=1e-14):
    x = np.ones(mat.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = mat @ x
        lam_new = float(x @ y) / float(x @ x)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-30):
            lam = lam_new
            break
        lam = lam_new
    return lam


# ---------------------------------------------------------------------------
# root of the spectral polynomial
# ---------------------------------------------------------------------------


def test_root_is_one_at_theta_zero():
    rng = np.random.default_rng(1)
    for _ in range(10):
        assert root_u(random_chain(rng), 0.0) == 1.0


def test_root_matches_quadratic_closed_form():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p0, p1 = rng.uniform(0.05, 0.95, size=2)
        theta = rng.uniform(-2.0, 5.0)
        chain = make_chain([p0, p1])
        pout = p0 * p1
        g = pout + (1.0 - pout) * math.exp(-theta)
        # u^2 - (1 - p0) g u - p0 g = 0
        closed = 0.5 * ((1.0 - p0) * g + math.sqrt(((1.0 - p0) * g) ** 2 + 4.0 * p0 * g))
        assert root_u(chain, theta) == pytest.approx(closed, rel=1e-10)


def test_root_matches_power_iteration():
    rng = np.random.default_rng(3)
    for _ in range(20):
        chain = random_chain(rng)
        theta = float(rng.uniform(-2.0, 5.0))
        lam = power_iteration(spectral_matrix(chain, theta))
        assert root_u(chain, theta) == pytest.approx(lam, rel=1e-8)


def test_root_coordinate_equivalence_with_reported_polynomial():
    # p0 * g * y* must equal u*, where y* is the positive root of the
    # unscaled polynomial solved by an independent companion-matrix method
    rng = np.random.default_rng(4)
    for _ in range(20):
        chain = random_chain(rng)
        theta = float(rng.uniform(-1.0, 3.0))
        m = chain.rounds
        p = chain.p
        pout = chain.pout
        g = pout + (1.0 - pout) * math.exp(-theta * chain.packet_bits)
        coeffs = [1.0, -(1.0 - p[0]) / p[0]]
        for k in range(1, m - 1):
            prod = np.prod(p[1:k]) if k > 1 else 1.0
            coeffs.append(-(1.0 - p[k]) * prod / (p[0] ** k * g**k))
        coeffs.append(-np.prod(p[1 : m - 1]) / (p[0] ** (m - 1) * g ** (m - 1)))
        roots = np.roots(coeffs)
        real = roots[np.abs(roots.imag) < 1e-9].real
        y_star = float(max(real[real > 0]))
        assert p[0] * g * y_star == pytest.approx(root_u(chain, theta), rel=1e-10)


def test_root_polynomial_descartes_and_bracket():
    # coefficient signs show exactly one change, and the root sits between
    # g and g^(1/M) (order depending on the sign of theta)
    rng = np.random.default_rng(5)
    for _ in range(30):
        chain = random_chain(rng)
        theta = float(rng.uniform(-2.0, 5.0))
        pout = chain.pout
        g = pout + (1.0 - pout) * math.exp(-theta * chain.packet_bits)
        series = chain.pout_series
        coeffs = [1.0]
        for m in range(chain.rounds - 1):
            coeffs.append(-(series[m] - series[m + 1]) * g)
        coeffs.append(-series[chain.rounds - 1] * g)
        signs = [c for c in coeffs if c != 0.0]
        changes = sum(1 for a, b in zip(signs, signs[1:]) if (a > 0) != (b > 0))
        assert changes == 1
        u = root_u(chain, theta)
        lo, hi = sorted((g, g ** (1.0 / chain.rounds)))
        assert lo - 1e-12 <= u <= hi + 1e-12


# ---------------------------------------------------------------------------
# delay exponent
# ---------------------------------------------------------------------------


def test_delay_exponent_zero_at_zero():
    rng = np.random.default_rng(6)
    assert delay_exponent(random_chain(rng), 0.0) == 0.0


def test_delay_exponent_single_round_closed_form():
    p0 = 0.37
    chain = make_chain([p0], bits=100.0, tb=10)
    for theta in (0.005, 0.05, -0.01):
        g = p0 + (1.0 - p0) * math.exp(-theta * 100.0)
        assert delay_exponent(chain, theta) == pytest.approx(-math.log(g), rel=1e-12)


def test_delay_exponent_saturates_when_outage_possible():
    chain = make_chain([0.5, 0.4, 0.3], bits=50.0, tb=5)
    fn = DelayExponentFn(chain)
    assert math.isfinite(fn.j_max)
    assert fn(500.0) == pytest.approx(fn.j_max, rel=1e-6)
    assert fn(0.05) < fn.j_max


def test_delay_exponent_unbounded_without_outage():
    chain = make_chain([0.5, 0.0], bits=50.0, tb=5)
    fn = DelayExponentFn(chain)
    assert fn.j_max == math.inf
    assert fn(1.0) < fn(2.0) < fn(4.0)


def test_delay_exponent_monotone_and_ratio_nonincreasing():
    rng = np.random.default_rng(7)
    chain = random_chain(rng, bits=200.0, tb=20)
    thetas = np.geomspace(1e-5, 0.1, 40)  # stay below the saturation plateau
    j_vals = [delay_exponent(chain, t) for t in thetas]
    assert all(a < b for a, b in zip(j_vals, j_vals[1:]))
    ratios = [j / t for j, t in zip(j_vals, thetas)]
    assert all(a >= b - 1e-12 for a, b in zip(ratios, ratios[1:]))


def test_delay_exponent_extreme_negative_theta_no_overflow():
    chain = make_chain([0.5, 0.4], bits=900.0, tb=90)
    val = delay_exponent(chain, -50.0)
    assert math.isfinite(val) and val < -40_000.0


# ---------------------------------------------------------------------------
# effective capacity at fixed packet size
# ---------------------------------------------------------------------------


def test_ec_perfect_hop_equals_rate():
    chain = make_chain([0.0, 0.0], bits=720.0, tb=180)
    assert outage_ec_fixed_L(chain, 0.02) == pytest.approx(720.0 / 180.0, rel=1e-12)


def test_ec_small_theta_approaches_goodput():
    rng = np.random.default_rng(8)
    for _ in range(10):
        chain = random_chain(rng, bits=700.0, tb=180)
        ec = outage_ec_fixed_L(chain, 1e-6)
        assert abs(ec - goodput(chain)) / goodput(chain) <= 0.005


def test_ec_nonincreasing_in_theta():
    chain = make_chain([0.6, 0.3, 0.2], bits=720.0, tb=180)
    assert outage_ec_fixed_L(chain, 0.001) >= outage_ec_fixed_L(chain, 0.01)


def test_ec_rejects_negative_theta():
    with pytest.raises(ValueError):
        outage_ec_fixed_L(make_chain([0.5]), -0.1)


# ---------------------------------------------------------------------------
# packet-size optimization
# ---------------------------------------------------------------------------


def quad_builder(bits: float) -> HarqChain:
    from harq_effcap.channel import outage_series_quadrature

    hop = HopSpec(protocol=Protocol.IR, links=(RAYLEIGH_16,), block_symbols=180, packet_bits=bits)
    return chain_from_series(outage_series_quadrature(hop, 4), bits, 180)


def test_optimize_L_interior_maximum():
    theta = 0.01
    l_opt, rate, pout = optimize_L(quad_builder, theta)
    assert rate > outage_ec_fixed_L(quad_builder(1.0), theta)
    assert rate > outage_ec_fixed_L(quad_builder(3600.0), theta)
    assert 1.0 < l_opt < 3600.0
    assert 0.0 <= pout <= 1.0
    # the rate vanishes at both ends of the packet-size axis
    assert outage_ec_fixed_L(quad_builder(0.5), theta) < 0.05
    assert outage_ec_fixed_L(quad_builder(30000.0), theta) < 1e-6


def test_optimize_L_beats_every_grid_point():
    theta = 0.02
    search = RateSearch(grid_points=24)
    _, rate, _ = optimize_L(quad_builder, theta, search)
    for bits in np.geomspace(1.0, 3600.0, 24):
        assert rate >= outage_ec_fixed_L(quad_builder(float(bits)), theta) - 1e-12


def test_optimize_L_matches_fine_grid_oracle():
    theta = 0.01
    l_opt, rate, _ = optimize_L(quad_builder, theta)
    grid = np.arange(max(1.0, l_opt - 40.0), l_opt + 40.0, 1.0)  # 1-bit brute force
    rates = [outage_ec_fixed_L(quad_builder(float(b)), theta) for b in grid]
    l_brute = float(grid[int(np.argmax(rates))])
    assert abs(l_opt - l_brute) <= 2.0
    assert rate >= max(rates) - 1e-9


def test_optimize_L_bounds_error():
    with pytest.raises(BracketError):
        optimize_L(quad_builder, 0.01, RateSearch(l_hi=40.0, grid_points=12))


# ---------------------------------------------------------------------------
# unlimited-retransmission repeat-decoding limit
# ---------------------------------------------------------------------------


def t1_chain(bits: float, rounds: int) -> HarqChain:
    from harq_effcap.channel import first_failure_prob

    p0 = first_failure_prob(RAYLEIGH_16, bits, 180)
    return make_chain([p0] * rounds, bits=bits, tb=180)


def test_t1_limit_matches_large_m_chain():
    theta = 0.01
    limit_rate = t1_infinite_M_ec(RAYLEIGH_16, 180, theta)
    builder = lambda bits: t1_chain(bits, 200)
    _, chain_rate, _ = optimize_L(builder, theta)
    assert abs(limit_rate - chain_rate) <= 1e-3


def test_t1_limit_dominates_single_points():
    theta = 0.02
    rate = t1_infinite_M_ec(RAYLEIGH_16, 180, theta)
    for bits in (200.0, 500.0, 900.0):
        p0 = t1_chain(bits, 1).p[0]
        inner = -math.log(1.0 - (1.0 - p0) * (1.0 - math.exp(-theta * bits)))
        assert rate >= inner / (theta * 180.0) - 1e-12


def test_t1_inner_expression_small_theta_limit():
    # at fixed L the per-theta rate tends to (1 - p0) * L / TB
    bits, theta = 400.0, 1e-8
    p0 = t1_chain(bits, 1).p[0]
    inner = -math.log(1.0 - (1.0 - p0) * (1.0 - math.exp(-theta * bits))) / (theta * 180.0)
    assert inner == pytest.approx((1.0 - p0) * bits / 180.0, rel=1e-4)


# ---------------------------------------------------------------------------
# exponent inversion
# ---------------------------------------------------------------------------


def test_invert_zero_target():
    chain = make_chain([0.5, 0.5], bits=10.0, tb=2)
    assert DelayExponentFn(chain).invert(0.0) == 0.0


def test_invert_round_trip():
    rng = np.random.default_rng(9)
    for _ in range(10):
        fn = DelayExponentFn(random_chain(rng, bits=300.0, tb=30))
        for frac in (0.1, 0.5, 0.9):
            target = frac * fn.j_max
            theta = fn.invert(target)
            assert fn(theta) == pytest.approx(target, rel=1e-8, abs=1e-12)


def test_invert_rejects_unreachable_target():
    fn = DelayExponentFn(make_chain([0.5, 0.4], bits=100.0, tb=10))
    with pytest.raises(ExponentRangeError):
        fn.invert(fn.j_max)
    with pytest.raises(ExponentRangeError):
        invert_delay_exponent(fn, fn.j_max * 1.5)
    with pytest.raises(ExponentRangeError):
        fn.invert(-0.1)


def test_estimated_chain_end_to_end():
    hop = HopSpec(protocol=Protocol.IR, links=(RAYLEIGH_16,), block_symbols=180, packet_bits=720.0)
    chain = build_chain(hop, 4, EstimatorConfig(samples=150_000, seed=44))
    fn = DelayExponentFn(chain)
    theta = fn.invert(0.9 * fn.j_max)
    assert fn(theta) == pytest.approx(0.9 * fn.j_max, rel=1e-8)
