"""Iteration drivers, rate prediction/measurement, stall and step conditions."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regap.algorithms import (GammaConditionError, InexactAPConfig,
                              RateMeasurementError, StepConditionError,
                              exact_alternating_projections,
                              inexact_alternating_projections, measure_rate,
                              predict_rate, regularized_extrapolated_ap)
from regap.core import (FIXED_POINT, MAX_ITER, STALLED_GAP, TOLERANCE_MET,
                        IterationTrace, Point, TraceRecord, canonical_point)
from regap.problems import (parallel_lines, perturbed_line, slab_problem,
                            two_lines, two_subspaces)
from regap.regularity import cbar_subspaces


# ---------------------------------------------------------------------------
# Oracles

def two_lines_trace_oracle(theta, d, n_cycles):
    """Closed-form alternating-projection orbit between two lines.

    For lines spanned by e1 and u = (cos t, sin t), starting from the point
    d*u, every projection scales the distance to the intersection by cos t:
    even_k = d cos^(2k+1) t along e1, odd_k = d cos^(2k+2) t along u.
    """
    u = np.array([math.cos(theta), math.sin(theta)])
    rows = []
    for k in range(n_cycles):
        even = d * math.cos(theta) ** (2 * k + 1) * np.array([1.0, 0.0])
        odd = d * math.cos(theta) ** (2 * k + 2) * u
        step = math.nan if k == 0 else d * math.cos(theta) ** (2 * k) * math.sin(theta)
        gap = d * math.cos(theta) ** (2 * k + 1) * math.sin(theta)
        rows.append((even, odd, step, gap))
    return rows


def perturbed_cycle_contraction(theta, phi):
    """Per-cycle contraction of the slid orbit, from plane trigonometry.

    Sliding the exact projection by tan(phi) times the point-to-line distance
    shortens each full cycle's distance decay to cos t * cos(t - phi)/cos(phi).
    """
    return math.cos(theta) * math.cos(theta - phi) / math.cos(phi)


def geometric_trace(ratio, n, first=1.0, reason=FIXED_POINT):
    """Synthetic trace whose half-step norms decay exactly geometrically."""
    trace = IterationTrace()
    e = Point(np.zeros(1))
    val = first
    for k in range(n):
        gap = val * ratio if k > 0 else val
        step = math.nan if k == 0 else val
        trace.append(TraceRecord(k, e, e, step, gap, 0.0, math.nan, math.nan))
        val = gap * ratio
    return trace.finish(reason)


# ---------------------------------------------------------------------------
# Rate prediction

def test_predict_rate_spot_values():
    assert predict_rate(0.5).eta == pytest.approx(0.5)
    assert predict_rate(0.0, 0.25).eta == pytest.approx(0.25)
    # eta = sin(asin c + asin gamma): at c = gamma = sin(pi/8) it is sin(pi/4)
    s = math.sin(math.pi / 8)
    assert predict_rate(s, s).eta == pytest.approx(math.sin(math.pi / 4), abs=1e-12)


def test_predict_rate_prox_regularity_switch():
    p = predict_rate(0.6, 0.1, m_prox_regular=True)
    q = predict_rate(0.6, 0.1, m_prox_regular=False)
    assert p.r_linear_rate == pytest.approx(p.eta)
    assert q.r_linear_rate == pytest.approx(math.sqrt(q.eta))
    assert q.r_linear_rate > p.r_linear_rate


def test_predict_rate_domain_guards():
    with pytest.raises(ValueError):
        predict_rate(1.0)
    with pytest.raises(ValueError):
        predict_rate(-0.1)
    with pytest.raises(ValueError):
        predict_rate(0.6, math.sqrt(1 - 0.36))  # gamma at the open boundary
    with pytest.raises(ValueError):
        predict_rate(0.6, 0.9)


@settings(max_examples=100)
@given(st.floats(0.0, 0.99), st.floats(0.0, 0.99), st.floats(0.0, 0.99))
def test_predict_rate_monotone_in_gamma_and_below_one(c, g1, g2):
    limit = math.sqrt(1.0 - c * c)
    g1, g2 = g1 * limit * 0.999, g2 * limit * 0.999
    lo, hi = min(g1, g2), max(g1, g2)
    eta_lo = predict_rate(c, lo).eta
    eta_hi = predict_rate(c, hi).eta
    assert eta_lo < 1.0 and eta_hi < 1.0
    if hi > lo + 1e-12:
        assert eta_hi > eta_lo  # strictly increasing in the alignment bound


# ---------------------------------------------------------------------------
# Rate measurement

def test_measure_rate_recovers_synthetic_ratio():
    trace = geometric_trace(0.7, 40)
    assert measure_rate(trace) == pytest.approx(0.7, abs=1e-10)
    assert measure_rate(trace, tail_fraction=0.25) == pytest.approx(0.7, abs=1e-10)


def test_measure_rate_ignores_trailing_zeros():
    trace = IterationTrace()
    e = Point(np.zeros(1))
    val = 1.0
    n = 30
    for k in range(n):
        step = math.nan if k == 0 else val
        gap = val * 0.5
        if k >= n - 2:  # the iterate landed on the set and stopped moving
            step, gap = 0.0, 0.0
        trace.append(TraceRecord(k, e, e, step, gap, 0.0, math.nan, math.nan))
        val = gap * 0.5
    trace.finish(FIXED_POINT)
    assert measure_rate(trace) == pytest.approx(0.5, abs=1e-10)


def test_measure_rate_refusals():
    with pytest.raises(RateMeasurementError, match="stalled"):
        measure_rate(geometric_trace(0.9, 40, reason=STALLED_GAP))
    with pytest.raises(RateMeasurementError, match="at least 10"):
        measure_rate(geometric_trace(0.5, 4))
    with pytest.raises(ValueError):
        measure_rate(geometric_trace(0.5, 40), tail_fraction=0.0)


# ---------------------------------------------------------------------------
# Exact alternating projections

def test_two_lines_matches_closed_form_orbit():
    theta, d = math.pi / 3, 2.0
    C, M = two_lines(theta)
    x0 = Point(d * np.array([math.cos(theta), math.sin(theta)]))
    trace = exact_alternating_projections(
        C, M, x0, InexactAPConfig(max_iterations=25, fixed_point_tolerance=1e-300))
    oracle = two_lines_trace_oracle(theta, d, 20)
    for rec, (even, odd, step, gap) in zip(trace.records, oracle):
        assert np.allclose(rec.even.data, even, atol=1e-12)
        assert np.allclose(rec.odd.data, odd, atol=1e-12)
        if not math.isnan(step):
            assert rec.step_norm == pytest.approx(step, abs=1e-12)
        assert rec.gap == pytest.approx(gap, abs=1e-12)
        assert rec.accepted


@pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 4, math.pi / 3])
def test_two_lines_rate_equals_cosine(theta):
    C, M = two_lines(theta)
    x0 = Point(np.array([3.0, 1.0]))
    trace = exact_alternating_projections(
        C, M, x0, InexactAPConfig(max_iterations=300, fixed_point_tolerance=1e-13))
    assert trace.reason == FIXED_POINT
    assert measure_rate(trace) == pytest.approx(math.cos(theta), abs=1e-6)


def test_two_subspaces_rate_bounded_by_regularity_constant():
    from scipy.linalg import null_space
    C, M = two_subspaces(8, 3, 4, seed=2)
    cbar = cbar_subspaces(null_space(C.matrix), null_space(M.matrix)).c_bar
    x0 = Point(np.random.default_rng(5).standard_normal(8))
    trace = exact_alternating_projections(
        C, M, x0, InexactAPConfig(max_iterations=2000, fixed_point_tolerance=1e-12))
    assert trace.reason == FIXED_POINT
    rate = measure_rate(trace)
    assert rate <= cbar + 1e-6
    assert rate == pytest.approx(cbar, abs=1e-3)  # generic starts see the worst angle


def test_max_iter_reason():
    C, M = two_lines(0.01)  # nearly parallel: very slow contraction
    trace = exact_alternating_projections(
        C, M, Point(np.array([5.0, 3.0])),
        InexactAPConfig(max_iterations=5, fixed_point_tolerance=1e-300))
    assert trace.reason == MAX_ITER
    assert len(trace.records) == 6


def test_tolerance_met_reason():
    C, M = two_lines(math.pi / 4)
    trace = exact_alternating_projections(
        C, M, Point(np.array([4.0, 4.0])),
        InexactAPConfig(max_iterations=400, fixed_point_tolerance=1e-14,
                        membership_tolerance=1e-3))
    assert trace.reason == TOLERANCE_MET
    final = trace.records[-1].even
    assert C.membership_residual(final) <= 1e-3
    assert M.membership_residual(final) <= 1e-3
    # looser tolerance stops strictly earlier than the fixed-point run
    tight = exact_alternating_projections(
        C, M, Point(np.array([4.0, 4.0])),
        InexactAPConfig(max_iterations=400, fixed_point_tolerance=1e-14))
    assert len(trace.records) < len(tight.records)


def test_parallel_lines_stall():
    C, M = parallel_lines(1.0)
    cfg = InexactAPConfig(max_iterations=500, fixed_point_tolerance=1e-9,
                          gap_stall_window=50)
    trace = exact_alternating_projections(C, M, Point(np.array([2.0, 0.3])), cfg)
    assert trace.reason == STALLED_GAP
    # even iterates freeze immediately; the stall needs one full window
    assert len(trace.records) == cfg.gap_stall_window + 2
    for rec in trace.records:
        assert rec.gap == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(RateMeasurementError):
        measure_rate(trace)


def test_config_validation():
    with pytest.raises(ValueError):
        InexactAPConfig(gamma=1.0)
    with pytest.raises(ValueError):
        InexactAPConfig(max_iterations=0)
    with pytest.raises(ValueError):
        InexactAPConfig(lambda_schedule="warmup")
    with pytest.raises(ValueError):
        InexactAPConfig(lambda_schedule="custom")
    with pytest.raises(ValueError):
        InexactAPConfig(lambda_schedule="custom", lambda_sequence=[0.5, 1.5])
    with pytest.raises(ValueError):
        InexactAPConfig(membership_tolerance=0.0)


# ---------------------------------------------------------------------------
# Inexact driver with supplied odd steps

def _run_perturbed(theta, phi, gamma=None, **kw):
    C, oracle, exact = perturbed_line(theta, phi)
    x0 = Point(np.array([2.0, 0.0]))
    even0 = canonical_point(C.project(x0))
    odd0 = canonical_point(oracle.project(even0))
    cfg = InexactAPConfig(gamma=gamma if gamma is not None else min(math.sin(phi) + 1e-9, 0.99),
                          max_iterations=500, fixed_point_tolerance=1e-12, **kw)
    return inexact_alternating_projections(
        C, lambda p: oracle.project(p), exact, even0, odd0, cfg)


def test_perturbed_alignment_equals_sine_of_slide_angle():
    theta, phi = math.pi / 4, 0.3
    trace = _run_perturbed(theta, phi)
    assert trace.reason == FIXED_POINT
    measured = [r.gamma for r in trace.records[1:]
                if not math.isnan(r.gamma) and r.gap > 1e-10]
    assert len(measured) > 10
    assert np.allclose(measured, math.sin(phi), atol=1e-9)


def test_perturbed_rate_matches_trigonometric_contraction():
    theta, phi = math.pi / 6, 0.305
    trace = _run_perturbed(theta, phi)
    per_cycle = perturbed_cycle_contraction(theta, phi)
    assert measure_rate(trace) == pytest.approx(math.sqrt(per_cycle), abs=1e-3)


def test_perturbed_rate_within_prediction():
    for theta, phi in [(math.pi / 4, 0.3), (math.pi / 3, 0.2)]:
        trace = _run_perturbed(theta, phi)
        pred = predict_rate(math.cos(theta), math.sin(phi))
        assert measure_rate(trace) <= pred.eta + 0.02


def test_overshooting_slide_violates_step_condition():
    with pytest.raises(StepConditionError):
        _run_perturbed(math.pi / 6, math.pi / 4)


def test_strict_gamma_enforcement():
    with pytest.raises(GammaConditionError, match="alignment residual"):
        _run_perturbed(math.pi / 4, 0.3, gamma=0.1, strict_gamma=True)
    # a generous bound passes strict verification
    trace = _run_perturbed(math.pi / 4, 0.3, gamma=0.5, strict_gamma=True)
    assert trace.reason == FIXED_POINT


def test_strict_gamma_requires_an_oracle():
    C, oracle, exact = perturbed_line(math.pi / 4, 0.2)
    x0 = Point(np.array([2.0, 0.0]))
    even0 = canonical_point(C.project(x0))
    odd0 = canonical_point(oracle.project(even0))
    cfg = InexactAPConfig(gamma=0.5, strict_gamma=True, max_iterations=50)
    with pytest.raises(GammaConditionError, match="normal-cone oracle"):
        inexact_alternating_projections(C, lambda p: oracle.project(p), None,
                                        even0, odd0, cfg)


def test_even_iterate_in_set_fixes_odd_iterate():
    # Feed candidates that land the even iterate inside the second set: the
    # driver must then take odd = even (fixed-point rule) and finish.
    C, M = two_lines(math.pi / 4)
    origin = Point(np.zeros(2))

    def approx(p):
        return M.project(p)

    even0 = Point(np.array([1.0, 0.0]))
    odd0 = origin  # jump straight to the intersection
    cfg = InexactAPConfig(max_iterations=10, fixed_point_tolerance=1e-12)
    trace = inexact_alternating_projections(C, approx, M, even0, odd0, cfg)
    assert trace.reason == FIXED_POINT
    last = trace.records[-1]
    assert last.gap == 0.0
    assert last.gamma == 0.0
    assert np.allclose(last.even.data, last.odd.data)


# ---------------------------------------------------------------------------
# Regularized driver

def test_consistent_slab_finishes_immediately():
    C, ball, _ = slab_problem(1.0, epsilon=0.6)  # x-axis lies inside the ball
    cfg = InexactAPConfig(max_iterations=50, fixed_point_tolerance=1e-10)
    trace = regularized_extrapolated_ap(C, ball, _, Point(np.array([3.0, 2.0])), cfg)
    assert trace.reason == FIXED_POINT
    assert len(trace.records) == 2
    assert trace.records[0].gap == 0.0


def test_inconsistent_slab_stalls_with_boundary_pinned_odds():
    C, ball, line = slab_problem(1.0, epsilon=0.2)
    cfg = InexactAPConfig(max_iterations=400, fixed_point_tolerance=1e-9,
                          gap_stall_window=40, lambda_schedule="surface")
    trace = regularized_extrapolated_ap(C, ball, line, Point(np.array([1.0, 0.0])), cfg)
    assert trace.reason == STALLED_GAP
    for rec in trace.records:
        assert rec.residual == pytest.approx(ball.epsilon, abs=1e-9)
        assert 0.0 < rec.lam <= 1.0
    # final gap: from the axis to the slab boundary at height 1 - sqrt(2 eps)
    assert trace.records[-1].gap == pytest.approx(1.0 - math.sqrt(0.4), abs=1e-6)


def test_custom_schedule_replays_sequence():
    C, ball, line = slab_problem(1.0, epsilon=0.2)
    cfg = InexactAPConfig(max_iterations=5, fixed_point_tolerance=1e-12,
                          lambda_schedule="custom", lambda_sequence=[0.3, 0.5],
                          measure_gamma=False)
    trace = regularized_extrapolated_ap(C, ball, line, Point(np.array([1.0, 0.0])), cfg)
    lams = [r.lam for r in trace.records]
    assert lams[0] == pytest.approx(0.3)
    assert all(v == pytest.approx(0.5) for v in lams[1:])


def test_constant_one_schedule_jumps_to_anchor():
    C, ball, line = slab_problem(1.0, epsilon=0.02)
    cfg = InexactAPConfig(max_iterations=3, fixed_point_tolerance=1e-12,
                          lambda_schedule="constant_one", measure_gamma=False)
    trace = regularized_extrapolated_ap(C, ball, line, Point(np.array([1.0, 0.0])), cfg)
    for rec in trace.records:
        assert np.allclose(rec.odd.data[1], 1.0)  # anchor line x2 = 1
        assert rec.lam == pytest.approx(1.0)


def test_surface_schedule_alignment_is_small_for_euclid_slab():
    # For the slab the segment is vertical and so is the residual gradient:
    # the surface step is perfectly aligned with the normal cone.
    C, ball, line = slab_problem(1.0, epsilon=0.2)
    cfg = InexactAPConfig(max_iterations=60, fixed_point_tolerance=1e-9,
                          gap_stall_window=30)
    trace = regularized_extrapolated_ap(C, ball, line, Point(np.array([1.0, 0.0])), cfg)
    gammas = [r.gamma for r in trace.records if not math.isnan(r.gamma)]
    assert gammas and max(gammas) < 1e-9
