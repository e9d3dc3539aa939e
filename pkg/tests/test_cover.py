import json
import math

import numpy as np
import pytest

from flatcover.cover import (
    FlatCover,
    build_cover_general,
    build_cover_hp,
    canonical_caps,
    curved_flat_dichotomy,
    hp_axis_family,
    normal_axis_family,
    overlap_profile,
    verify_cover,
)
from flatcover.geometry import axis_rectangle
from flatcover.poly2 import (
    BivariatePoly,
    elliptic_phase,
    hyperbolic_phase,
    perturbed_hyperbolic,
)

SADDLE = BivariatePoly(2, {(2, 0): 1.0, (0, 2): -1.0})


def test_canonical_caps_is_a_partition():
    delta = 2.0 ** -6
    cov = canonical_caps(delta)
    assert len(cov) == 64
    assert cov.kind == "caps"
    side = math.sqrt(delta)
    for box in cov.iter_members():
        assert box.side_lengths() == pytest.approx((side, side))
    prof = overlap_profile(cov)
    assert prof.min == prof.max == 1
    rng = np.random.default_rng(0)
    counts = cov.membership_counts(rng.uniform(0, 1, size=(500, 2)))
    np.testing.assert_array_equal(counts, 1)


def test_caps_require_dyadic_delta():
    with pytest.raises(ValueError):
        canonical_caps(0.3)


def test_axis_family_overlap_equals_level_count():
    delta = 2.0 ** -8
    cov = hp_axis_family(delta)
    levels = 2 * 4 + 1
    assert len({g.beta for p in cov.parts for g in p.groups}) == levels
    prof = overlap_profile(cov)
    assert prof.min == prof.max == levels
    assert cov.overlap_bound() == pytest.approx(levels)
    # each level is itself a partition with the prescribed aspect
    for part in cov.parts:
        for g in part.groups:
            assert g.w * g.h == pytest.approx(delta)
            assert g.w == pytest.approx(2.0 ** g.beta * math.sqrt(delta))


def test_axis_family_members_are_flat_for_the_model_phase():
    delta = 2.0 ** -6
    rep = verify_cover(hp_axis_family(delta), hyperbolic_phase(), a_const=1.0)
    assert rep.all_flat
    assert rep.covers_domain
    assert rep.worst_defect <= delta * (1 + 1e-12)


def test_hp_cover_verifies_on_perturbed_phases():
    rng = np.random.default_rng(1107)
    delta = 2.0 ** -6
    for degree in (2, 3):
        phi = perturbed_hyperbolic(degree, rng)
        cov = build_cover_hp(phi, delta, a_const=4.0)
        rep = verify_cover(cov, phi)
        assert rep.ok, f"degree {degree}: {rep}"
        assert rep.max_overlap <= 4.0 * 4.0 * math.log2(1.0 / delta)


def test_hp_cover_rejects_non_normal_form():
    with pytest.raises(ValueError):
        build_cover_hp(elliptic_phase(), 2.0 ** -6)


def test_normal_axis_family_saddle_certifies():
    delta = 2.0 ** -9
    cov = normal_axis_family(SADDLE, delta)
    assert cov.kind == "axis"
    rep = verify_cover(cov, SADDLE)
    assert rep.ok
    # tiles follow the null frame, so the constant stays near the mixed
    # Hessian entry instead of growing with the aspect ratio
    assert cov.a_const == pytest.approx(2.0, rel=1e-9)
    prof = overlap_profile(cov)
    assert prof.max <= math.floor(math.log2(1.0 / delta)) + 1


def test_normal_axis_family_definite_falls_back_to_caps():
    cov = normal_axis_family(elliptic_phase(), 2.0 ** -6)
    assert cov.kind == "caps"
    assert verify_cover(cov, elliptic_phase()).ok


def test_normal_axis_family_rejects_bad_phases():
    with pytest.raises(ValueError):
        normal_axis_family(BivariatePoly(2, {(2, 0): 1.0}), 2.0 ** -6)
    with pytest.raises(ValueError):
        normal_axis_family(perturbed_hyperbolic(3, np.random.default_rng(0)), 2.0 ** -6)


def test_general_cover_on_uniformly_curved_phase():
    delta = 2.0 ** -5
    phi = hyperbolic_phase()
    cov = build_cover_general(phi, delta)
    rep = verify_cover(cov, phi)
    assert rep.ok
    # one curved patch, trivial normalization: the anisotropic builder
    # at the same constant produces the same family
    direct = build_cover_hp(phi, delta, a_const=cov.a_const)
    assert len(cov) == len(direct)
    pts = np.random.default_rng(3).uniform(0, 1, size=(300, 2))
    np.testing.assert_array_equal(
        cov.membership_counts(pts), direct.membership_counts(pts)
    )


def test_general_cover_on_degenerate_phase_gives_strips():
    delta = 2.0 ** -6
    phi = BivariatePoly(2, {(2, 0): 1.0})
    cov = build_cover_general(phi, delta)
    rep = verify_cover(cov, phi)
    assert rep.ok
    widths = []
    for box in cov.iter_members():
        w, h = box.side_lengths()
        # vertical strips through the whole domain
        assert h == pytest.approx(1.0)
        widths.append(w)
    assert sum(widths) == pytest.approx(1.0)
    # strip widths obey the one-dimensional cap scale: flat means
    # w^2 <= A*delta, and greedy growth makes all but the final
    # leftover strip essentially maximal
    cap = math.sqrt(cov.a_const * delta)
    assert max(widths) <= cap * (1 + 1e-9)
    for w in widths[:-1]:
        assert w >= cap * (1 - 1e-6)


def test_general_cover_on_mixed_cubic_phase():
    phi = BivariatePoly(3, {(3, 0): 1.0, (0, 3): 1.0, (1, 1): 1.0})
    cov = build_cover_general(phi, 2.0 ** -5)
    rep = verify_cover(cov, phi)
    assert rep.ok


def test_curved_flat_dichotomy_classifies():
    curved, flat = curved_flat_dichotomy(hyperbolic_phase())
    assert curved and not flat  # det H = -1 everywhere
    nearly_flat = BivariatePoly(2, {(1, 1): 1e-4})
    curved2, flat2 = curved_flat_dichotomy(nearly_flat)
    assert flat2 and not curved2
    # the two lists together tile the domain
    phi = BivariatePoly(3, {(2, 1): 1.0, (1, 2): -1.0})
    m_const = 4.0
    curved3, flat3 = curved_flat_dichotomy(phi, m_const=m_const)
    area = sum(b.area() for b in curved3) + sum(b.area() for b in flat3)
    assert area == pytest.approx(1.0, rel=1e-9)
    assert curved3 and flat3
    # a square whose center clears the threshold always lands curved
    det = phi.hessian_det_poly()
    for box in flat3:
        cx, cy = box.center
        assert abs(det.eval(cx, cy)) <= 1.0 / m_const + 1e-12


def test_cover_json_round_trip_members_and_counts():
    rng = np.random.default_rng(5)
    for cov in (
        canonical_caps(2.0 ** -4),
        hp_axis_family(2.0 ** -4),
        normal_axis_family(SADDLE, 2.0 ** -6),
    ):
        blob = json.dumps(cov.to_json_dict(), sort_keys=True)
        cov2 = FlatCover.from_json_dict(json.loads(blob))
        assert len(cov2) == len(cov)
        assert cov2.kind == cov.kind
        assert cov2.a_const == cov.a_const
        pts = rng.uniform(0, 1, size=(200, 2))
        np.testing.assert_array_equal(
            cov2.membership_counts(pts), cov.membership_counts(pts)
        )
        blob2 = json.dumps(cov2.to_json_dict(), sort_keys=True)
        assert blob2 == blob


def test_cover_json_rejects_malformed():
    with pytest.raises(ValueError):
        FlatCover.from_json_dict({"delta": 0.25})


def test_sample_members_reproducible_and_valid():
    cov = hp_axis_family(2.0 ** -6)
    picks = cov.sample_members(np.random.default_rng(42), 25)
    again = cov.sample_members(np.random.default_rng(42), 25)
    assert len(picks) == 25
    for a, b in zip(picks, again):
        assert a.center == b.center and a.e1 == b.e1
    # sampled boxes really are members
    member_keys = {(m.center, m.e1, m.e2) for m in cov.iter_members()}
    for box in picks:
        assert (box.center, box.e1, box.e2) in member_keys


def test_verify_cover_flags_undersized_constant():
    cov = canonical_caps(2.0 ** -4)
    rep = verify_cover(cov, hyperbolic_phase(), a_const=0.5)
    assert not rep.all_flat
    assert not rep.ok
    assert rep.min_a_flat == pytest.approx(1.0)
    assert rep.worst_member is not None


def test_verify_cover_sees_loose_members():
    cov = canonical_caps(2.0 ** -4)
    cov.loose.append(axis_rectangle(0.0, 0.0, 1.0, 1.0))
    rep = verify_cover(cov, hyperbolic_phase(), a_const=1.0)
    assert not rep.all_flat
    assert rep.worst_defect == pytest.approx(1.0)


def test_overlap_profile_guards_resolution():
    with pytest.raises(ValueError):
        overlap_profile(canonical_caps(2.0 ** -4), n=8)
