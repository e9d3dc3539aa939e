"""Flatness defects of polynomial graphs over parallelograms.

The defect of a phase ``phi`` over a box S is

    sup_{u, v in S} | phi(u) - phi(v) - grad phi(u) . (u - v) |,

the worst tangent-plane prediction error between two points of the box.
A box is ``(phi, delta)``-flat when the defect is at most ``delta``; the
graph over a flat box lies inside a slab of thickness ``2 delta``.

For quadratic phases the defect has a closed form: with the full-edge
matrix E of S and Hessian H, it equals ``max |t^T (E^T H E) t| / 2`` over
the unit square in t-coordinates, a maximization handled exactly by
checking vertices and edge critical points.  For higher degree the sup
is bracketed by grid sampling with a Lipschitz remainder plus an exact
quadratic-part bound with a cubic-tail correction; the two brackets are
intersected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import optimize

from .geometry import Parallelogram
from .poly2 import BivariatePoly

# Default flatness-versus-scale constants used by the cover builders.
A_QUADRATIC = 4.0
A_GENERAL = 16.0

_CERT_REL_GAP = 0.01  # certification: bracket width below 1% of the value


@dataclass(frozen=True)
class FlatnessReport:
    """Defect estimate with certification bracket.

    ``defect`` is the best certified-from-below value; ``lower`` and
    ``upper`` bracket the true sup.  ``certified`` is set when the
    bracket is tighter than 1% (relative).  ``argmax`` is a witnessing
    point pair for the lower bound.
    """

    defect: float
    lower: float
    upper: float
    certified: bool
    argmax_u: Tuple[float, float]
    argmax_v: Tuple[float, float]


@dataclass(frozen=True)
class NullDirections:
    """Hessian data at a saddle point of the phase.

    ``w = (-a, 1)`` and ``v = (1, -b)`` span the two directions in which
    the quadratic form of the Hessian vanishes; ``a`` and ``b`` are the
    off-axis slopes.  Both are tiny for phases close to the model saddle.
    """

    a: float
    b: float
    w: Tuple[float, float]
    v: Tuple[float, float]
    hessian: np.ndarray


def default_a_const(phi: BivariatePoly) -> float:
    return A_QUADRATIC if phi.support_degree() <= 2 else A_GENERAL


# -- quadratic closed form ----------------------------------------------


def _quad_form_box_max(g: np.ndarray) -> Tuple[float, np.ndarray]:
    """max |t^T G t| over t in [-1,1]^2 with the extremum location.

    The extremum of a quadratic form on the square sits at a vertex or
    at an interior critical point of an edge restriction; |.| needs both
    the max and the min of the form.
    """
    cands = [np.array([1.0, 1.0]), np.array([1.0, -1.0]),
             np.array([-1.0, 1.0]), np.array([-1.0, -1.0])]
    g11, g12, g22 = g[0, 0], g[0, 1], g[1, 1]
    if g22 != 0.0:
        for t1 in (-1.0, 1.0):
            t2 = -g12 * t1 / g22
            if abs(t2) <= 1.0:
                cands.append(np.array([t1, t2]))
    if g11 != 0.0:
        for t2 in (-1.0, 1.0):
            t1 = -g12 * t2 / g11
            if abs(t1) <= 1.0:
                cands.append(np.array([t1, t2]))
    best, best_t = 0.0, np.zeros(2)
    for t in cands:
        val = abs(float(t @ g @ t))
        if val > best:
            best, best_t = val, t
    return best, best_t


def _quadratic_defect(phi: BivariatePoly, box: Parallelogram):
    """Exact defect for a phase with support degree <= 2."""
    h = phi.hessian(*box.center)
    e_full = 2.0 * box.edge_matrix
    g = e_full.T @ h @ e_full
    m, t = _quad_form_box_max(g)
    defect = 0.5 * m
    c = np.asarray(box.center)
    d_half = box.edge_matrix @ t  # half of the extremal difference vector
    u = tuple(c + d_half)
    v = tuple(c - d_half)
    return defect, u, v


# -- coefficient bounds over a box ---------------------------------------


def _hessian_entry_bounds(phi: BivariatePoly, box: Parallelogram, min_total_degree: int = 2):
    """Entrywise sup bounds for |Hessian| over the box's bounding box,
    restricted to monomials of total degree >= min_total_degree."""
    xmin, ymin, xmax, ymax = box.bounding_box()
    rx = max(abs(xmin), abs(xmax), 1e-300)
    ry = max(abs(ymin), abs(ymax), 1e-300)
    b11 = b12 = b22 = 0.0
    for (j, k), a in phi.coeffs.items():
        if j + k < min_total_degree:
            continue
        mag = abs(a)
        if j >= 2:
            b11 += mag * j * (j - 1) * rx ** (j - 2) * ry ** k
        if j >= 1 and k >= 1:
            b12 += mag * j * k * rx ** (j - 1) * ry ** (k - 1)
        if k >= 2:
            b22 += mag * k * (k - 1) * rx ** j * ry ** (k - 2)
    return b11, b12, b22


def _hessian_op_bound(phi: BivariatePoly, box: Parallelogram, min_total_degree: int = 2) -> float:
    b11, b12, b22 = _hessian_entry_bounds(phi, box, min_total_degree)
    return max(b11, b22) + b12


def _split_interval(phi: BivariatePoly, box: Parallelogram):
    """Bracket the defect by exact-quadratic-part plus cubic-tail bound."""
    quad = BivariatePoly(
        2, {(j, k): a for (j, k), a in phi.coeffs.items() if j + k == 2}
    )
    q, u, v = _quadratic_defect(quad, box)
    tail_deg3 = BivariatePoly(
        phi.degree,
        {(j, k): a for (j, k), a in phi.coeffs.items() if j + k >= 3},
    )
    if tail_deg3.is_zero():
        return q, q, u, v
    op = _hessian_op_bound(tail_deg3, box, min_total_degree=3)
    diam = box.diameter()
    d = 0.5 * op * diam * diam
    return max(q - d, 0.0), q + d, u, v


# -- grid sampling with Lipschitz certificate ----------------------------


def _sample_grid_quadratic(phi: BivariatePoly, box: Parallelogram, m: int):
    """The m^4 pair maximum, collapsed for quadratics.

    For a quadratic phase the integrand depends only on u - v, so the
    pair grid reduces to the (2m-1)^2 difference grid; the returned
    value equals the full pair enumeration exactly.
    """
    h = phi.hessian(*box.center)
    e = box.edge_matrix
    g = e.T @ h @ e
    d = np.linspace(-2.0, 2.0, 2 * m - 1)
    d1, d2 = np.meshgrid(d, d, indexing="ij")
    vals = np.abs(0.5 * (g[0, 0] * d1 * d1 + 2 * g[0, 1] * d1 * d2
                         + g[1, 1] * d2 * d2))
    k = int(np.argmax(vals))
    t1, t2 = d1.flat[k], d2.flat[k]
    c = np.asarray(box.center)
    half = e @ np.array([t1 / 2.0, t2 / 2.0])
    u = tuple(c + half)
    v = tuple(c - half)
    spacing = 2.0 / (m - 1) if m > 1 else 2.0
    e_norms = np.linalg.norm(e, axis=0)
    op = _hessian_op_bound(phi, box)
    remainder = op * box.diameter() * spacing * float(e_norms.sum())
    return float(vals.flat[k]), u, v, remainder


def _sample_grid(phi: BivariatePoly, box: Parallelogram, m: int):
    """Max |defect integrand| over an m x m x m x m sample of S x S."""
    if phi.support_degree() <= 2:
        return _sample_grid_quadratic(phi, box, m)
    s = np.linspace(-1.0, 1.0, m)
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    e = box.edge_matrix
    c = np.asarray(box.center)
    pts = (
        c[None, :]
        + s1.reshape(-1, 1) * e[:, 0][None, :]
        + s2.reshape(-1, 1) * e[:, 1][None, :]
    )
    x, y = pts[:, 0], pts[:, 1]
    vals = np.asarray(phi.eval(x, y))
    grads = phi.gradient(x, y)
    # g[i, j] = (phi(u_i) - grad_i . u_i) - phi(v_j) + grad_i . v_j
    a = vals - np.einsum("ij,ij->i", grads, pts)
    best = -1.0
    bi = bj = 0
    chunk = max(1, (1 << 22) // max(len(pts), 1))
    for lo in range(0, len(pts), chunk):
        hi = min(lo + chunk, len(pts))
        block = a[lo:hi, None] + grads[lo:hi] @ pts.T - vals[None, :]
        np.abs(block, out=block)
        k = int(np.argmax(block))
        val = float(block.flat[k])
        if val > best:
            best = val
            bi = lo + k // len(pts)
            bj = k % len(pts)
        del block
    u = tuple(pts[bi])
    v = tuple(pts[bj])
    spacing = 2.0 / (m - 1) if m > 1 else 2.0
    e_norms = np.linalg.norm(e, axis=0)
    op = _hessian_op_bound(phi, box)
    remainder = op * box.diameter() * spacing * float(e_norms.sum())
    return best, u, v, remainder


def _polish(phi: BivariatePoly, box: Parallelogram, u0, v0):
    """Local ascent of |g| from the best sampled pair, in box coordinates."""
    e = box.edge_matrix
    c = np.asarray(box.center)

    def neg_g(t):
        t = np.clip(t, -1.0, 1.0)
        u = c + e @ t[:2]
        v = c + e @ t[2:]
        gu = phi.gradient(*u)
        val = phi.eval(*u) - phi.eval(*v) - float(gu @ (u - v))
        return -abs(val)

    s0 = np.concatenate([box.affine_coords(u0)[0], box.affine_coords(v0)[0]])
    res = optimize.minimize(
        neg_g, s0, method="Nelder-Mead",
        options={"maxiter": 200, "xatol": 1e-10, "fatol": 1e-14},
    )
    t = np.clip(res.x, -1.0, 1.0)
    u = tuple(c + e @ t[:2])
    v = tuple(c + e @ t[2:])
    return -float(res.fun), u, v


# -- public API -----------------------------------------------------------


def flat_defect(
    phi: BivariatePoly,
    box: Parallelogram,
    m: int = 33,
    polish: bool = True,
    method: str = "auto",
) -> FlatnessReport:
    """Defect of ``phi`` over ``box`` with a certification bracket.

    ``method`` is "auto" (closed form for quadratics, sampling plus
    bounds otherwise), "closed" (force the quadratic path; errors on
    higher degree), or "sample" (force the grid estimate, used as an
    independent brute-force oracle in tests).
    """
    if method not in ("auto", "closed", "sample"):
        raise ValueError(f"unknown method {method!r}")
    deg = phi.support_degree()
    if method == "closed" and deg > 2:
        raise ValueError("closed form requires a quadratic phase")
    if method != "sample" and deg <= 2:
        defect, u, v = _quadratic_defect(phi, box)
        return FlatnessReport(defect, defect, defect, True, u, v)

    sampled, u, v, remainder = _sample_grid(phi, box, m)
    if polish:
        polished, u2, v2 = _polish(phi, box, u, v)
        if polished > sampled:
            sampled, u, v = polished, u2, v2
    lower, upper = sampled, sampled + remainder
    if method != "sample":
        slo, shi, su, sv = _split_interval(phi, box)
        if slo > lower:
            lower, u, v = slo, su, sv
        upper = min(upper, shi)
    certified = (upper - lower) <= _CERT_REL_GAP * max(upper, 1e-300)
    return FlatnessReport(lower, lower, upper, certified, u, v)


def flat_defect_interval(phi: BivariatePoly, box: Parallelogram):
    """Cheap certified bracket (no sampling): exact for quadratics,
    quadratic-part plus cubic-tail bound otherwise."""
    if phi.support_degree() <= 2:
        d, _, _ = _quadratic_defect(phi, box)
        return d, d
    lo, hi, _, _ = _split_interval(phi, box)
    return lo, hi


def is_flat(phi: BivariatePoly, box: Parallelogram, delta: float,
            a_const: Optional[float] = None) -> bool:
    """Whether the defect is at most ``a_const * delta``.

    Decides from the cheap bracket when it is conclusive and falls back
    to the full estimator otherwise.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    a = default_a_const(phi) if a_const is None else float(a_const)
    threshold = a * delta
    lo, hi = flat_defect_interval(phi, box)
    if hi <= threshold:
        return True
    if lo > threshold:
        return False
    return flat_defect(phi, box).defect <= threshold


# -- null directions and candidate boxes ---------------------------------


def null_directions(phi: BivariatePoly, point) -> NullDirections:
    """Directions annihilated by the Hessian quadratic form at a saddle.

    Requires negative Hessian determinant at the point.  With
    ``s = sqrt(-det H)``, the slopes are ``a = H22 / (H12 + s)`` and
    ``b = H11 / (H12 + s)``, and ``w = (-a, 1)``, ``v = (1, -b)``
    satisfy ``w^T H w = v^T H v = 0`` identically.
    """
    x, y = float(point[0]), float(point[1])
    h = phi.hessian(x, y)
    det = float(h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0])
    if not det < 0.0:
        raise ValueError(
            f"null directions need a saddle (det H < 0); det H = {det:g} at {(x, y)}"
        )
    s = math.sqrt(-det)
    denom = float(h[0, 1]) + s
    if denom == 0.0:
        raise ValueError("degenerate Hessian: H12 + sqrt(|det H|) vanished")
    a = float(h[1, 1]) / denom
    b = float(h[0, 0]) / denom
    return NullDirections(a, b, (-a, 1.0), (1.0, -b), h)


def null_direction_fields(phi: BivariatePoly, points):
    """Vectorized (a, b, valid) across many points; valid = saddle."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    pxx, pxy, pyy = phi.hessian_polys()
    h11 = np.asarray(pxx.eval(pts[:, 0], pts[:, 1]), dtype=float)
    h12 = np.asarray(pxy.eval(pts[:, 0], pts[:, 1]), dtype=float)
    h22 = np.asarray(pyy.eval(pts[:, 0], pts[:, 1]), dtype=float)
    det = h11 * h22 - h12 * h12
    valid = det < 0.0
    s = np.sqrt(np.where(valid, -det, 1.0))
    denom = h12 + s
    valid &= denom != 0.0
    safe = np.where(denom == 0.0, 1.0, denom)
    return h22 / safe, h11 / safe, valid


def candidate_box(
    phi: BivariatePoly,
    point,
    alpha: float,
    delta: float,
    which: str = "w",
) -> Parallelogram:
    """The delta*alpha by 1/alpha rectangle at a point, long side along
    the chosen null direction ("w" or "v")."""
    if which not in ("w", "v"):
        raise ValueError("which must be 'w' or 'v'")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not (1.0 - 1e-12 <= alpha <= delta ** -0.5 + 1e-9):
        raise ValueError(
            f"alpha must lie in [1, delta^-1/2]; got alpha={alpha:g}, delta={delta:g}"
        )
    nd = null_directions(phi, point)
    d = np.asarray(nd.w if which == "w" else nd.v, dtype=float)
    d = d / np.linalg.norm(d)
    perp = np.array([-d[1], d[0]])
    long_half = 0.5 / alpha
    short_half = 0.5 * delta * alpha
    return Parallelogram(
        (float(point[0]), float(point[1])),
        tuple(long_half * d),
        tuple(short_half * perp),
        alpha=alpha,
    )
