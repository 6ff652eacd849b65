import math

import numpy as np
import pytest
from scipy import integrate

from harq_effcap.tradeoff import (
    ConstraintDomainError,
    DelayConstraint,
    PhiUnboundedError,
    delay_violation,
    j_threshold,
    lambert_w_m1,
    phi,
)


def violation_oracle(j1: float, j2: float, d: float) -> float:
    """Pr{D1 + D2 > d} by quadrature of the two-exponential convolution."""
    inner, _ = integrate.quad(
        lambda t: j1 * math.exp(-j1 * t) * (1.0 - math.exp(-j2 * (d - t))), 0.0, d, limit=200
    )
    return 1.0 - inner


# ---------------------------------------------------------------------------
# Lambert W, lower branch
# ---------------------------------------------------------------------------


def test_lambert_branch_point_exact():
    assert lambert_w_m1(-math.exp(-1.0)) == -1.0


def test_lambert_known_value():
    assert lambert_w_m1(-2.0 * math.exp(-2.0)) == pytest.approx(-2.0, rel=1e-13)


def test_lambert_round_trip_over_domain():
    for x in -np.geomspace(math.exp(-1.0) * (1.0 - 1e-9), 1e-12, 60):
        w = lambert_w_m1(float(x))
        assert w <= -1.0
        assert abs(w * math.exp(w) - x) <= 1e-12 * abs(x)


def test_lambert_against_bisection_oracle():
    x = -0.05 / math.e
    lo, hi = -50.0, -1.0  # w e^w is decreasing in w on the lower branch
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) > x:
            lo = mid
        else:
            hi = mid
    assert lambert_w_m1(x) == pytest.approx(0.5 * (lo + hi), abs=1e-12)


def test_lambert_domain_errors():
    with pytest.raises(ValueError):
        lambert_w_m1(0.0)
    with pytest.raises(ValueError):
        lambert_w_m1(-1.0)
    with pytest.raises(ValueError):
        lambert_w_m1(0.2)


# ---------------------------------------------------------------------------
# constraint and threshold exponent
# ---------------------------------------------------------------------------


def test_constraint_validation_and_derived_exponents():
    c = DelayConstraint(epsilon=0.05, d_max_blocks=1000.0)
    assert c.j0 == pytest.approx(-math.log(0.05) / 1000.0, rel=1e-14)
    assert c.j0 <= c.j_th
    with pytest.raises(ValueError):
        DelayConstraint(epsilon=0.0, d_max_blocks=10.0)
    with pytest.raises(ValueError):
        DelayConstraint(epsilon=0.5, d_max_blocks=0.0)


def test_vacuous_constraint_has_zero_exponents():
    c = DelayConstraint(epsilon=1.0, d_max_blocks=500.0)
    assert c.j0 == 0.0
    assert c.j_th == 0.0


@pytest.mark.parametrize("eps", [0.5, 0.05, 0.001])
def test_j_threshold_solves_symmetric_equation(eps):
    # (1 + x) e^{-x} = eps has a unique positive root x = J_th * d_max
    lo, hi = 0.0, 200.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (1.0 + mid) * math.exp(-mid) > eps:
            lo = mid
        else:
            hi = mid
    c = DelayConstraint(epsilon=eps, d_max_blocks=1000.0)
    assert j_threshold(c) == pytest.approx(0.5 * (lo + hi) / 1000.0, rel=1e-10)
    assert delay_violation(c.j_th, c.j_th, 1000.0) == pytest.approx(eps, abs=1e-9)


# ---------------------------------------------------------------------------
# two-queue delay violation
# ---------------------------------------------------------------------------


def test_violation_no_decay_is_certain():
    assert delay_violation(0.0, 0.0, 1000.0) == 1.0


def test_violation_symmetric_branch():
    j, d = 0.004, 1000.0
    assert delay_violation(j, j, d) == pytest.approx((1.0 + j * d) * math.exp(-j * d), rel=1e-13)


def test_violation_one_queue_negligible():
    # a huge second exponent reduces the tail to the single-queue law
    val = delay_violation(0.01, 1e6, 1000.0)
    assert abs(val - math.exp(-10.0)) <= 1e-9
    assert delay_violation(0.01, math.inf, 1000.0) == pytest.approx(math.exp(-10.0), rel=1e-12)


def test_violation_matches_quadrature_on_random_inputs():
    rng = np.random.default_rng(77)
    for _ in range(100):
        j1 = float(rng.uniform(1e-4, 0.05))
        j2 = float(rng.uniform(1e-4, 0.05))
        d = float(rng.uniform(50.0, 2000.0))
        assert abs(delay_violation(j1, j2, d) - violation_oracle(j1, j2, d)) <= 1e-6


def test_violation_symmetric_in_arguments():
    rng = np.random.default_rng(78)
    for _ in range(50):
        j1, j2 = rng.uniform(1e-4, 0.1, size=2)
        d = float(rng.uniform(10.0, 3000.0))
        assert delay_violation(j1, j2, d) == delay_violation(j2, j1, d)


def test_violation_continuous_across_equal_exponents():
    # the two-term form next to the diagonal agrees with the symmetric form
    # at the midpoint exponent to second order in the separation
    for j, d in ((0.003, 1000.0), (0.02, 200.0), (1.0, 3.0)):
        for sign in (+1.0, -1.0):
            j2 = j * (1.0 + sign * 1e-6)
            direct = (j2 * math.exp(-j * d) - j * math.exp(-j2 * d)) / (j2 - j)
            mean = 0.5 * (j + j2)
            symmetric = (1.0 + mean * d) * math.exp(-mean * d)
            assert abs(direct - symmetric) <= 1e-8
            # the implementation itself is exact on both sides of the switch
            assert delay_violation(j, j2, d) == pytest.approx(direct, rel=1e-9)


def test_violation_decreasing_in_each_argument():
    d = 800.0
    grid = np.linspace(0.001, 0.02, 12)
    vals_j1 = [delay_violation(j, 0.005, d) for j in grid]
    vals_j2 = [delay_violation(0.005, j, d) for j in grid]
    assert all(a > b for a, b in zip(vals_j1, vals_j1[1:]))
    assert all(a > b for a, b in zip(vals_j2, vals_j2[1:]))


def test_violation_rejects_negative_exponents():
    with pytest.raises(ValueError):
        delay_violation(-0.1, 0.2, 10.0)


# ---------------------------------------------------------------------------
# constraint curve
# ---------------------------------------------------------------------------

CONSTRAINT = DelayConstraint(epsilon=0.05, d_max_blocks=1000.0)


def test_phi_fixed_point_at_threshold():
    j_th = CONSTRAINT.j_th
    assert phi(j_th, CONSTRAINT) == pytest.approx(j_th, rel=1e-9)


def test_phi_is_an_involution():
    j1 = 1.3 * CONSTRAINT.j_th
    assert phi(phi(j1, CONSTRAINT), CONSTRAINT) == pytest.approx(j1, rel=1e-8)


def test_phi_solutions_lie_on_the_curve():
    for factor in (1.05, 1.5, 3.0, 8.0):
        j1 = factor * CONSTRAINT.j0
        j2 = phi(j1, CONSTRAINT)
        assert delay_violation(j1, j2, 1000.0) == pytest.approx(0.05, abs=1e-9)


def test_phi_strictly_decreasing():
    lo = 1.01 * CONSTRAINT.j0 + 1e-9
    grid = np.linspace(lo, 5.0 * CONSTRAINT.j_th, 100)
    vals = [phi(float(j), CONSTRAINT) for j in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_phi_midpoint_convexity():
    a = 1.1 * CONSTRAINT.j_th
    b = 2.0 * CONSTRAINT.j_th
    mid = phi(0.5 * (a + b), CONSTRAINT)
    assert mid <= 0.5 * (phi(a, CONSTRAINT) + phi(b, CONSTRAINT)) + 1e-15


def test_phi_domain_and_divergence_errors():
    with pytest.raises(ConstraintDomainError):
        phi(0.5 * CONSTRAINT.j0, CONSTRAINT)
    with pytest.raises(PhiUnboundedError):
        phi(CONSTRAINT.j0, CONSTRAINT)


def test_phi_ceiling_sentinel():
    # just above j0 the matching exponent exceeds any physical value
    j1 = CONSTRAINT.j0 * (1.0 + 1e-12)
    assert phi(j1, CONSTRAINT, ceiling=1e3) == math.inf
