"""Parabolic rescaling of flat boxes.

A flat box of dimensions sigma*alpha x 1/alpha maps to the unit square
by a rigid motion, the diagonal scaling (xi/alpha, sigma*alpha*eta),
and a shear that kills the square coefficients of the transformed
phase.  Dividing by the resulting mixed coefficient returns the phase
to normal form, and the defect transforms exactly linearly, which is
what makes induction on scales work.  This module builds that affine
map, audits the intermediate coefficient bounds, and pulls covers of
the rescaled square back to certified covers for the original phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .cover import FlatCover, FramedGroups, _saddle_normalizer, _tail_remainder
from .flatness import flat_defect_interval, is_flat
from .geometry import AffineMap2, Parallelogram, axis_rectangle
from .poly2 import BivariatePoly, compose_affine, poly_scale, poly_sub


@dataclass(frozen=True)
class CoeffAudit:
    """Worst observed / allowed ratio for the axis-frame coefficients."""

    worst_ratio: float
    worst_monomial: Tuple[int, int]
    factor: float
    ratios: Dict[Tuple[int, int], float]

    @property
    def ok(self) -> bool:
        return self.worst_ratio <= 1.0

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class RescaleResult:
    """Affine normalization of a flat box together with its audit trail.

    ``L`` maps the unit square onto the box; ``phi_tilde`` is the phase
    seen from the unit square, in normal form.  ``sigma_eff`` is the
    exact factor in defect(phi, L(B)) = sigma_eff * defect(phi_tilde, B);
    it equals ``sigma`` exactly for the model saddle on an axis box and
    stays within O(angle mismatch) of it in general.  ``split_depth``
    records how many dyadic subdivisions of the unit square would bring
    every degree >= 3 coefficient under the normal-form class bound
    (pieces are metadata, never materialized).
    """

    L: AffineMap2
    phi_tilde: BivariatePoly
    sigma: float
    sigma_eff: float
    alpha: float
    b_coeffs: Dict[Tuple[int, int], float]
    split_depth: int
    piece_side: float


def _edge_angle(vec: np.ndarray) -> float:
    """Direction of an edge vector folded into [0, pi)."""
    theta = math.atan2(float(vec[1]), float(vec[0]))
    while theta < 0:
        theta += math.pi
    while theta >= math.pi:
        theta -= math.pi
    return theta


def _box_orientation(box: Parallelogram) -> Tuple[float, float, float]:
    """(angle of the long edge, long side, short side); squares take the
    lexicographically smaller of the two edge angles."""
    l1 = 2.0 * float(np.linalg.norm(box.e1))
    l2 = 2.0 * float(np.linalg.norm(box.e2))
    if abs(l1 - l2) <= 1e-12 * max(l1, l2):
        t1, t2 = _edge_angle(box.e1), _edge_angle(box.e2)
        return (min(t1, t2), l1, l2)
    if l1 >= l2:
        return (_edge_angle(box.e1), l1, l2)
    return (_edge_angle(box.e2), l2, l1)


def rescale_phase(
    phi: BivariatePoly,
    box: Parallelogram,
    sigma: float,
    a_const: float = 4.0,
) -> RescaleResult:
    """Normalize a flat box to the unit square and the phase with it.

    Requires the box to be (phi, a_const*sigma)-flat with side product
    sigma (the cover's boxes have dimensions sigma*alpha x 1/alpha).
    Raises ValueError when the box is not flat at the claimed scale,
    its dimensions do not match sigma, or alpha falls outside
    [1, 1/sigma].
    """
    if not (0 < sigma <= 1):
        raise ValueError("sigma must lie in (0, 1]")
    theta, long_side, short_side = _box_orientation(box)
    area = long_side * short_side
    if abs(area - sigma) > 1e-9 * sigma:
        raise ValueError(
            f"box sides {long_side:.3g} x {short_side:.3g} have product "
            f"{area:.6g}, which does not match sigma={sigma:.6g}"
        )
    alpha = 1.0 / long_side
    if not (1.0 - 1e-9 <= alpha <= 1.0 / sigma + 1e-9):
        raise ValueError(f"alpha={alpha:.6g} outside [1, 1/sigma]")
    if not is_flat(phi, box, sigma, a_const):
        raise ValueError("box is not flat at scale a_const*sigma")

    ct, st = math.cos(theta), math.sin(theta)
    rot = np.array([[ct, -st], [st, ct]])
    corner = np.asarray(box.center) - rot @ np.array([long_side / 2, short_side / 2])
    to_axis = AffineMap2(((ct, -st), (st, ct)), (float(corner[0]), float(corner[1])))
    # phase seen from the axis-aligned frame [0,long] x [0,short]
    psi0 = compose_affine(phi, to_axis.matrix, to_axis.offset)
    g0 = psi0.gradient(0.0, 0.0)
    tangent0 = BivariatePoly(
        1,
        {(0, 0): float(psi0.eval(0.0, 0.0)), (1, 0): float(g0[0]), (0, 1): float(g0[1])},
    )
    b_poly = poly_sub(psi0, tangent0)
    b_coeffs = {jk: a for jk, a in b_poly.coeffs.items() if jk[0] + jk[1] >= 2}

    scale_map = AffineMap2(((long_side, 0.0), (0.0, short_side)), (0.0, 0.0))
    psi_unit = compose_affine(psi0, scale_map.matrix, scale_map.offset)
    shear, mixed = _saddle_normalizer(psi_unit)
    psi_sh = compose_affine(psi_unit, shear.matrix, shear.offset)
    g1 = psi_sh.gradient(0.0, 0.0)
    tangent1 = BivariatePoly(
        1,
        {(0, 0): float(psi_sh.eval(0.0, 0.0)), (1, 0): float(g1[0]), (0, 1): float(g1[1])},
    )
    tilde = poly_scale(poly_sub(psi_sh, tangent1), 1.0 / mixed)
    # the shear zeroes the square coefficients exactly up to rounding
    cleaned = dict(tilde.coeffs)
    for jk in ((2, 0), (0, 2)):
        leftover = cleaned.pop(jk, 0.0)
        if abs(leftover) > 1e-9:
            raise ValueError(f"square coefficient {jk} survived the shear: {leftover!r}")
    tilde = BivariatePoly(tilde.degree, cleaned)

    bound = 10.0 ** (-10 * phi.degree)
    tail = max(
        (abs(a) for (j, k), a in tilde.coeffs.items() if j + k >= 3), default=0.0
    )
    split_depth = 0 if tail <= bound else int(math.ceil(math.log2(tail / bound)))
    return RescaleResult(
        L=to_axis.compose(scale_map).compose(shear),
        phi_tilde=tilde,
        sigma=sigma,
        sigma_eff=abs(mixed),
        alpha=alpha,
        b_coeffs=b_coeffs,
        split_depth=split_depth,
        piece_side=2.0 ** -split_depth,
    )


def verify_coeff_bounds(
    result: RescaleResult,
    phi: Optional[BivariatePoly] = None,
    factor: float = 100.0,
) -> CoeffAudit:
    """Audit the axis-frame coefficients against their scale bounds.

    Each coefficient b_{j,k} (j+k >= 2, excluding the mixed one) is
    compared with factor * sigma^(1-k) * alpha^(j-k), the bound that
    flatness of the box forces up to an unspecified constant; the audit
    reports the worst observed/allowed ratio rather than asserting a
    particular constant.
    """
    sigma, alpha = result.sigma, result.alpha
    ratios: Dict[Tuple[int, int], float] = {}
    worst = 0.0
    worst_jk = (1, 1)
    for (j, k), b in result.b_coeffs.items():
        if (j, k) == (1, 1):
            continue
        allowed = factor * sigma ** (1 - k) * alpha ** (j - k)
        r = abs(b) / allowed
        ratios[(j, k)] = r
        if r > worst:
            worst, worst_jk = r, (j, k)
    return CoeffAudit(worst, worst_jk, factor, ratios)


def pullback_cover(
    cover_prime: FlatCover,
    result: RescaleResult,
    phi: BivariatePoly,
    a_const: Optional[float] = None,
) -> FlatCover:
    """Map a cover of the rescaled unit square back through L.

    A cover at scale delta' for phi_tilde becomes a cover at scale
    sigma_eff * delta' for phi; every member is re-certified flat and a
    failure raises (it would mean the defect identity was violated).
    """
    delta = result.sigma_eff * cover_prime.delta
    a_const = cover_prime.a_const if a_const is None else a_const
    threshold = a_const * delta * (1 + 1e-9)
    parts = []
    for part in cover_prime.parts:
        frame = result.L if part.frame is None else result.L.compose(part.frame)
        parts.append(FramedGroups(frame, list(part.groups)))
    loose = [result.L.apply_box(m) for m in cover_prime.loose]
    cover = FlatCover(delta, a_const, parts, loose, kind="pullback")
    corners = result.L.apply(
        np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    )
    cover.domain = (
        float(corners[:, 0].min()), float(corners[:, 1].min()),
        float(corners[:, 0].max()), float(corners[:, 1].max()),
    )
    for part in cover.parts:
        for grid in part.groups:
            proto = part.world_box(grid.tile(grid.i0, grid.j0))
            lo, hi = flat_defect_interval(phi, proto)
            rem = _tail_remainder(phi, cover.domain, proto.diameter())
            if hi + rem <= threshold:
                continue
            for tile in grid.tiles():
                member = part.world_box(tile)
                if not is_flat(phi, member, delta, a_const):
                    raise ValueError("pullback member failed flatness re-certification")
    for member in loose:
        if not is_flat(phi, member, delta, a_const):
            raise ValueError("pullback member failed flatness re-certification")
    return cover
