import math

import numpy as np
import pytest

from flatcover.cover import FlatCover, canonical_caps, hp_axis_family
from flatcover.geometry import axis_rectangle
from flatcover.norms import (
    Box3,
    ExpSum,
    assign_frequencies,
    bump_example,
    decoupling_ratio,
    decoupling_report,
    expsum_lp,
    line_example,
    lp_norm,
    product_exp_sum,
    random_product_example,
    sample_exp_sum,
    slope_fit,
    snap_lift,
    stein_tomas_ratio,
    strip_example,
)
from flatcover.poly2 import BivariatePoly, hyperbolic_phase


def test_exp_sum_validation():
    phi = hyperbolic_phase()
    with pytest.raises(ValueError):
        ExpSum(phi, [[0.0, 0.0], [0.0, 0.0]], [1.0, 1.0])  # duplicate freqs
    with pytest.raises(ValueError):
        ExpSum(phi, [[0.0, 0.0]], [1.0, 2.0])  # count mismatch
    with pytest.raises(ValueError):
        ExpSum(phi, [[0.0, 0.0]], [np.nan])


def test_product_exp_sum_matches_dense_weights():
    # additively separable phase, so the product structure is recorded
    phi = BivariatePoly(2, {(2, 0): 1.0, (0, 2): -1.0})
    xs = np.array([0.0, 0.25, 0.5])
    ys = np.array([0.0, 0.125])
    xw = np.array([1.0, 2.0, -1.0], dtype=complex)
    yw = np.array([1.0, 1j], dtype=complex)
    f = product_exp_sum(phi, xs, ys, xw, yw)
    assert len(f) == 6
    assert f.factors is not None
    for (x, y), w in zip(f.freqs, f.weights):
        i = np.where(xs == x)[0][0]
        j = np.where(ys == y)[0][0]
        assert w == pytest.approx(xw[i] * yw[j])
    assert f.l2_weight() == pytest.approx(
        np.linalg.norm(xw) * np.linalg.norm(yw)
    )


def test_lifted_heights_follow_the_phase():
    phi = hyperbolic_phase()
    f = bump_example(phi, (0.0, 0.0, 1.0, 1.0), 0.25)
    lifted = f.lifted()
    np.testing.assert_allclose(
        lifted[:, 2], lifted[:, 0] * lifted[:, 1], atol=1e-12
    )


def test_snap_lift_moves_heights_to_grid():
    phi = hyperbolic_phase()
    delta = 2.0 ** -4
    r = 1.0 / delta
    f = bump_example(phi, (0.0, 0.0, 1.0, 1.0), delta)
    g = snap_lift(f, r)
    heights = g.lifted()[:, 2]
    np.testing.assert_allclose(heights * r, np.round(heights * r), atol=1e-12)
    assert np.max(np.abs(heights - f.lifted()[:, 2])) <= 0.5 / r + 1e-15
    with pytest.raises(ValueError):
        snap_lift(f, 0.0)
    # product structure survives snapping when the phase is separable
    sep = bump_example(BivariatePoly(2, {(2, 0): 1.0, (0, 2): -1.0}),
                       (0.0, 0.0, 1.0, 1.0), delta)
    snapped = snap_lift(sep, r)
    assert snapped.factors is not None
    np.testing.assert_allclose(snapped.lifted()[:, 2] * r,
                               np.round(snapped.lifted()[:, 2] * r), atol=1e-12)


def test_sample_exp_sum_is_the_plain_sum():
    phi = hyperbolic_phase()
    f = product_exp_sum(phi, np.array([0.0, 0.5]), np.array([0.0, 0.25]),
                        np.array([1.0, 1j]), np.array([2.0, -1.0]))
    box = Box3((0.3, -0.2, 0.1), 2.0)
    field = sample_exp_sum(f, box, 12)
    # brute force at one grid point
    i = (3, 7, 5)
    axes = [box.center[k] - 1.0 + 2.0 * (np.arange(12) + 0.5) / 12 for k in range(3)]
    x = np.array([axes[0][i[0]], axes[1][i[1]], axes[2][i[2]]])
    direct = np.sum(f.weights * np.exp(2j * np.pi * (f.lifted() @ x)))
    assert field.values[i] == pytest.approx(direct, rel=1e-12)


def test_sample_exp_sum_guards():
    phi = hyperbolic_phase()
    f = product_exp_sum(phi, np.array([0.0, 8.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        sample_exp_sum(f, Box3((0, 0, 0), 4.0), 16)  # aliasing
    with pytest.raises(ValueError):
        sample_exp_sum(f, Box3((0, 0, 0), 0.5), 400)  # grid too large
    with pytest.raises(ValueError):
        lp_norm(sample_exp_sum(f, Box3((0, 0, 0), 0.5), 16), 0.5)


def test_expsum_lp_matches_direct_riemann_mean():
    """Even-p norms from the reduced-lattice engine must equal the
    honest midpoint-grid mean of |f|^p over one period box."""
    phi = hyperbolic_phase()
    delta = 0.25
    r = 1.0 / delta
    f = snap_lift(bump_example(phi, (0.0, 0.0, 1.0, 1.0), delta), r)
    lifted = f.lifted()
    kmax = int(round(np.max(np.abs(lifted)) * r))
    for p in (2.0, 4.0, 6.0):
        rep = expsum_lp(f, p, r)
        assert rep.exact
        assert rep.snap_max == 0.0  # pre-snapped
        n = int(p) * kmax + 1
        field = sample_exp_sum(f, Box3((r / 2, r / 2, r / 2), r), n)
        brute = lp_norm(field, p)
        assert rep.value == pytest.approx(brute, rel=1e-10)
        # un-normalized norms gain the box volume factor
        rep_un = expsum_lp(f, p, r, normalized=False)
        assert rep_un.value == pytest.approx(rep.value * r ** (3.0 / p), rel=1e-12)


def test_expsum_lp_parseval_at_p2():
    rng = np.random.default_rng(12)
    f = random_product_example(hyperbolic_phase(), 2.0 ** -3, rng)
    g = snap_lift(f, 2.0 ** 3)
    rep = expsum_lp(g, 2.0, 2.0 ** 3)
    assert rep.exact
    assert rep.method == "parseval"
    assert rep.value == pytest.approx(g.l2_weight(), rel=1e-12)


def test_expsum_lp_sup_is_attained_by_unit_weights():
    # all weights positive at frequency zero phase alignment: sup = sum
    f = line_example(2.0 ** -4)
    rep = expsum_lp(f, math.inf, 2.0 ** 4)
    assert rep.value == pytest.approx(float(len(f)), rel=1e-9)
    assert not rep.exact  # lattice max is declared a lower bound


def test_expsum_lp_validates():
    f = line_example(2.0 ** -2)
    with pytest.raises(ValueError):
        expsum_lp(f, 0.5, 4.0)
    with pytest.raises(ValueError):
        expsum_lp(f, 4.0, 0.0)


def test_assign_frequencies_sharp_partition():
    delta = 2.0 ** -4
    cov = canonical_caps(delta)
    f = bump_example(hyperbolic_phase(), (0.0, 0.0, 1.0, 1.0), delta)
    subsets, counts = assign_frequencies(f, cov, tol=0.0)
    np.testing.assert_array_equal(counts, 1)
    assert sum(len(s) for s in subsets) == len(f)
    # stadium assignment keeps everyone covered but duplicates edges
    _, stadium = assign_frequencies(f, cov, tol=None)
    assert stadium.min() >= 1
    assert stadium.max() >= 2


def test_assign_frequencies_rejects_uncovered():
    cov = canonical_caps(2.0 ** -4)
    stray = ExpSum(hyperbolic_phase(), [[1.7, 0.2]], [1.0])
    with pytest.raises(ValueError):
        assign_frequencies(stray, cov, tol=0.0)


def test_decoupling_single_member_is_trivial():
    delta = 2.0 ** -4
    f = snap_lift(bump_example(hyperbolic_phase(), (0, 0, 1, 1), delta), 1 / delta)
    cov = FlatCover(delta, 4.0, [], [axis_rectangle(-0.1, -0.1, 1.1, 1.1)])
    rep = decoupling_report(f, cov, 4.0)
    assert rep.members_used == 1
    assert rep.ratio == pytest.approx(1.0, rel=1e-12)
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-12)


def test_decoupling_p2_partition_is_identity():
    # Parseval: against any partition of the frequencies the p=2 ratio
    # is exactly one
    delta = 2.0 ** -4
    f = snap_lift(bump_example(hyperbolic_phase(), (0, 0, 1, 1), delta), 1 / delta)
    for cov in (canonical_caps(delta), hp_axis_family(delta)):
        rep = decoupling_report(f, cov, 2.0, tol=0.0)
        per_level = rep.max_memberships
        assert rep.ratio * math.sqrt(per_level) == pytest.approx(1.0, rel=1e-9)


def test_decoupling_line_example_additive_energy():
    """The line input against the square partition has a closed form:
    ||f||_4^4 is the additive energy (2n^3+n)/3 of {0..n-1} and each of
    the n caps holds one unit frequency."""
    delta = 2.0 ** -6
    n = 8
    f = line_example(delta)
    assert len(f) == n
    rep = decoupling_report(f, canonical_caps(delta), 4.0, tol=0.0)
    energy = (2 * n ** 3 + n) / 3.0
    assert rep.exact
    assert rep.lhs ** 4 == pytest.approx(energy, rel=1e-10)
    assert rep.members_used == n
    assert rep.rhs == pytest.approx(math.sqrt(n), rel=1e-12)
    assert rep.ratio == pytest.approx((energy / n ** 2) ** 0.25, rel=1e-10)
    assert decoupling_ratio(f, canonical_caps(delta), 4.0, tol=0.0) == rep.ratio


def test_decoupling_threaded_equals_serial():
    delta = 2.0 ** -4
    f = snap_lift(bump_example(hyperbolic_phase(), (0, 0, 1, 1), delta), 1 / delta)
    cov = canonical_caps(delta)
    a = decoupling_report(f, cov, 4.0, jobs=1, tol=0.0)
    b = decoupling_report(f, cov, 4.0, jobs=3, tol=0.0)
    assert a.ratio == pytest.approx(b.ratio, rel=1e-13)
    assert a.members_used == b.members_used


def test_slope_fit_recovers_power_law():
    deltas = [2.0 ** -e for e in range(4, 9)]
    pts = [(d, 3.0 * d ** -0.25) for d in deltas]
    rep = slope_fit(pts)
    assert rep.slope == pytest.approx(0.25, abs=1e-12)
    assert rep.intercept == pytest.approx(math.log2(3.0), abs=1e-12)
    assert rep.residual < 1e-12
    with pytest.raises(ValueError):
        slope_fit(pts[:3])
    with pytest.raises(ValueError):
        slope_fit([(0.5, 1.0), (0.25, -2.0), (0.125, 1.0), (0.0625, 1.0)])


def test_line_example_sits_on_the_axis():
    delta = 2.0 ** -6
    f = line_example(delta)
    assert len(f) == 8
    np.testing.assert_allclose(f.freqs[:, 1], 0.0, atol=0)
    np.testing.assert_allclose(np.diff(f.freqs[:, 0]), math.sqrt(delta), atol=1e-12)
    with pytest.raises(ValueError):
        line_example(0.3)


def test_strip_example_is_one_row():
    delta = 2.0 ** -4
    f = strip_example(delta, 3)
    assert len(f) == 16
    np.testing.assert_allclose(f.freqs[:, 1], 3 * delta, atol=0)
    with pytest.raises(ValueError):
        strip_example(delta, 16)


def test_bump_example_counts_and_bounds():
    delta = 2.0 ** -3
    f = bump_example(hyperbolic_phase(), (0.0, 0.5, 0.5, 1.0), delta)
    assert len(f) == 5 * 5
    assert f.freqs[:, 0].max() <= 0.5 + 1e-12
    assert f.freqs[:, 1].min() >= 0.5 - 1e-12
    with pytest.raises(ValueError):
        bump_example(hyperbolic_phase(), (0.0, 0.0, 1.5, 1.0), delta)


def test_random_product_example_is_reproducible():
    phi = hyperbolic_phase()
    a = random_product_example(phi, 2.0 ** -3, np.random.default_rng(5))
    b = random_product_example(phi, 2.0 ** -3, np.random.default_rng(5))
    np.testing.assert_array_equal(a.weights, b.weights)
    sep = random_product_example(BivariatePoly(2, {(2, 0): 1.0, (0, 2): -1.0}),
                                 2.0 ** -3, np.random.default_rng(5))
    assert sep.factors is not None


def test_stein_tomas_single_frequency():
    # one frequency has |f| identically 1, so the ratio is exactly the
    # prefactor delta^(1-3/p)
    delta = 2.0 ** -4
    f = ExpSum(hyperbolic_phase(), [[0.5, 0.5]], [1.0])
    for p in (4.0, 6.0):
        got = stein_tomas_ratio(f, delta, p)
        assert got == pytest.approx(delta ** (1.0 - 3.0 / p), rel=1e-12)
    assert stein_tomas_ratio(f, delta, math.inf) == pytest.approx(delta, rel=1e-12)


def test_stein_tomas_scale_invariance_and_guards():
    delta = 2.0 ** -3
    rng = np.random.default_rng(8)
    f = random_product_example(hyperbolic_phase(), delta, rng)
    base = stein_tomas_ratio(f, delta, 4.0)
    scaled = ExpSum(f.phase, f.freqs, 7.5 * f.weights)
    assert stein_tomas_ratio(scaled, delta, 4.0) == pytest.approx(base, rel=1e-12)
    with pytest.raises(ValueError):
        stein_tomas_ratio(f, delta, 3.0)
    cubic = ExpSum(BivariatePoly(3, {(3, 0): 1.0}), [[0.1, 0.1]], [1.0])
    with pytest.raises(ValueError):
        stein_tomas_ratio(cubic, delta, 4.0)
