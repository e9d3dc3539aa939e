"""Discrete restriction experiments on anisotropic frequency lattices.

The lattice (delta Z) x (alpha delta Z) inside the unit square, lifted
to a saddle, meets each member of a fine flat cover in O(1) points when
alpha is a quadratic irrational: two lattice points in one thin box
force |a + sqrt(2) b| to be small with integer a, b, which the Pell
bound forbids.  Rational alpha restores a line of lattice points inside
a single member and the count blows up.  This module enumerates such
lattices, counts points per member (without materializing members), and
evaluates the Diophantine gap and the resulting restriction ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .cover import FlatCover
from .geometry import Parallelogram
from .norms import ExpSum, _parallelogram_distance, expsum_lp, product_exp_sum
from .poly2 import BivariatePoly

SQRT2 = math.sqrt(2.0)


@dataclass
class FrequencyLattice:
    """Points (m*delta, n*alpha*delta) in the unit square, stored as the
    integer pairs (m, n)."""

    delta: float
    alpha: float
    mn: np.ndarray

    def __post_init__(self) -> None:
        self.mn = np.asarray(self.mn, dtype=np.int64).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.mn)

    def points(self) -> np.ndarray:
        return np.column_stack(
            [self.mn[:, 0] * self.delta, self.mn[:, 1] * (self.alpha * self.delta)]
        )

    def m_values(self) -> np.ndarray:
        return np.unique(self.mn[:, 0])

    def n_values(self) -> np.ndarray:
        return np.unique(self.mn[:, 1])

    def to_exp_sum(
        self,
        phi: BivariatePoly,
        weights: Union[None, np.ndarray, Tuple[np.ndarray, np.ndarray]] = None,
    ) -> ExpSum:
        """Exponential sum on the lattice; product weights (or unit
        weights) keep the separable fast path available."""
        xs = self.m_values() * self.delta
        ys = self.n_values() * (self.alpha * self.delta)
        if weights is None:
            return product_exp_sum(phi, xs, ys, name="lattice")
        if isinstance(weights, tuple):
            return product_exp_sum(phi, xs, ys, weights[0], weights[1], name="lattice")
        return ExpSum(phi, self.points(), np.asarray(weights, dtype=complex),
                      name="lattice")


def lambda_grid(delta: float, alpha: float) -> FrequencyLattice:
    """The lattice (delta Z x alpha delta Z) clipped to the unit square."""
    inv = 1.0 / delta
    if abs(inv - round(inv)) > 1e-9:
        raise ValueError("1/delta must be an integer")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    m_max = int(round(inv))
    n_max = int(math.floor(inv / alpha + 1e-9))
    mm, nn = np.meshgrid(np.arange(m_max + 1), np.arange(n_max + 1), indexing="ij")
    return FrequencyLattice(delta, alpha, np.column_stack([mm.ravel(), nn.ravel()]))


def points_in_flat_set(
    lat: FrequencyLattice,
    s: Parallelogram,
    phi: BivariatePoly,
    tol: float,
) -> int:
    """Lattice points whose lifted point lies in the tol-neighborhood of
    the vertical slab over s and which sit in the (1+tol)-dilate of s.

    The slab is vertical, so the lift drops out of the distance; the
    phase argument is kept for interface symmetry with the cover side.
    """
    del phi
    pts = lat.points()
    near = _parallelogram_distance(pts, s) <= tol * (1 + 1e-12)
    coords = s.affine_coords(pts)
    inside = np.all(np.abs(coords) <= 1.0 + tol, axis=1)
    return int(np.count_nonzero(near & inside))


def _similarity_scale(mat: np.ndarray) -> Optional[float]:
    """Scale factor if mat is a similarity (rotation times scaling)."""
    g = mat.T @ mat
    if abs(g[0, 1]) > 1e-9 * abs(g[0, 0]) or abs(g[0, 0] - g[1, 1]) > 1e-9 * abs(g[0, 0]):
        return None
    return math.sqrt(abs(g[0, 0]))


def _grid_tile_counts(local_pts: np.ndarray, grid, tol_local: float,
                      dilate_tol: float) -> np.ndarray:
    """Per-cell counts of lattice points meeting both membership
    conditions, vectorized over the whole tiling.  Returns a flat array
    over the grid's (ni * nj) cells with dropped cells zeroed."""
    ct, st = math.cos(grid.theta), math.sin(grid.theta)
    rel = local_pts - np.asarray(grid.anchor)
    fx = rel[:, 0] * ct + rel[:, 1] * st
    fy = -rel[:, 0] * st + rel[:, 1] * ct
    ci = np.floor(fx / grid.w).astype(np.int64)
    cj = np.floor(fy / grid.h).astype(np.int64)
    counts = np.zeros(grid.ni * grid.nj, dtype=np.int64)
    half_w, half_h = 0.5 * grid.w, 0.5 * grid.h
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ii = ci + di
            jj = cj + dj
            x1 = (fx - (ii + 0.5) * grid.w) / half_w
            x2 = (fy - (jj + 0.5) * grid.h) / half_h
            dil = np.maximum(np.abs(x1), np.abs(x2)) <= 1.0 + dilate_tol
            dx = np.maximum(np.maximum(ii * grid.w - fx, fx - (ii + 1) * grid.w), 0.0)
            dy = np.maximum(np.maximum(jj * grid.h - fy, fy - (jj + 1) * grid.h), 0.0)
            near = (dx * dx + dy * dy) <= tol_local * tol_local * (1 + 1e-12)
            ok = dil & near & (ii >= grid.i0) & (ii < grid.i1) & (jj >= grid.j0) & (jj < grid.j1)
            if ok.any():
                key = (ii[ok] - grid.i0) * grid.nj + (jj[ok] - grid.j0)
                np.add.at(counts, key, 1)
    if grid.keep is not None:
        counts[~grid.keep.ravel()] = 0
    return counts


def max_flat_multiplicity(
    cover: FlatCover,
    lat: FrequencyLattice,
    phi: BivariatePoly,
    tol: Optional[float] = None,
) -> Tuple[int, Dict[int, int]]:
    """Largest lattice count over the cover's members, with a histogram
    count -> number of members.

    Tile groups are counted wholesale through cell histograms; only
    loose members are visited one by one.  Frames must be similarities
    (rotations and scalings) for the neighborhood condition to transfer
    to the local frame exactly; all built-in constructions satisfy this.
    """
    tol = cover.delta if tol is None else float(tol)
    pts = lat.points()
    hist: Dict[int, int] = {}
    best = 0
    for part in cover.parts:
        if part.frame is None:
            local = pts
            scale = 1.0
        else:
            scale = _similarity_scale(part.frame.matrix)
            if scale is None:
                for grid in part.groups:
                    for tile in grid.tiles():
                        c = points_in_flat_set(lat, part.world_box(tile), phi, tol)
                        hist[c] = hist.get(c, 0) + 1
                        best = max(best, c)
                continue
            local = part.frame.inverse().apply(pts)
        for grid in part.groups:
            counts = _grid_tile_counts(local, grid, tol / scale, tol)
            if grid.keep is not None:
                live = counts[grid.keep.ravel()]
            else:
                live = counts
            if len(live) == 0:
                continue
            best = max(best, int(live.max()))
            vals, freq = np.unique(live, return_counts=True)
            for v, c in zip(vals, freq):
                hist[int(v)] = hist.get(int(v), 0) + int(c)
    for box in cover.loose:
        c = points_in_flat_set(lat, box, phi, tol)
        hist[c] = hist.get(c, 0) + 1
        best = max(best, c)
    return best, hist


# -- the Diophantine gap ---------------------------------------------------


@dataclass(frozen=True)
class PellGap:
    """min |a + sqrt(2) b| * b^(1+eps) over 1 <= b <= b_max with a the
    nearest integer to -sqrt(2) b."""

    product: float
    a: int
    b: int
    gap: float
    eps: float


def pell_gap(b_max: int, eps_prime: float) -> PellGap:
    """The numerator |a^2 - 2 b^2| is computed in exact integers; it is
    a nonzero integer (2 is not a square), which is the whole point."""
    if not (1 <= b_max <= 10 ** 6):
        raise ValueError("b_max must lie in [1, 10^6]")
    b = np.arange(1, b_max + 1, dtype=np.int64)
    a = -np.rint(SQRT2 * b).astype(np.int64)
    num = np.abs(a * a - 2 * b * b)
    gap = num / (SQRT2 * b - a)
    prod = gap * np.power(b.astype(float), 1.0 + eps_prime)
    k = int(np.argmin(prod))
    return PellGap(float(prod[k]), int(a[k]), int(b[k]), float(gap[k]), eps_prime)


def pell_convergents(b_max: int):
    """Continued-fraction convergents a/b of -sqrt(2) with b <= b_max:
    the denominators realizing the successive minima of |a + sqrt(2) b|."""
    out = []
    p_prev, p_cur = 1, 1  # convergents of sqrt(2) = [1; 2, 2, ...]
    q_prev, q_cur = 0, 1
    while q_cur <= b_max:
        out.append((-p_cur, q_cur))
        p_prev, p_cur = p_cur, 2 * p_cur + p_prev
        q_prev, q_cur = q_cur, 2 * q_cur + q_prev
    return out


def discrete_restriction_ratio(
    lat: FrequencyLattice,
    weights: Union[None, np.ndarray, Tuple[np.ndarray, np.ndarray]],
    phi: BivariatePoly,
    p: float,
    d: int = 3,
) -> float:
    """||sum a e(x.(xi, phi(xi)))||_{L^p_#} over the box of side
    delta^(-d), divided by the l2 norm of the weights.

    Exact for p in {2, 4} via the reduced-lattice engine (the lifted
    heights land on exact integers for quadratic phases at d >= 2).
    """
    if not (2 <= p <= 4):
        raise ValueError("p must lie in [2, 4]")
    if not float(p).is_integer() or int(p) % 2 != 0:
        raise ValueError("only the even exponents p=2 and p=4 have exact paths")
    f = lat.to_exp_sum(phi, weights)
    r_side = lat.delta ** (-d)
    rep = expsum_lp(f, p, r_side)
    return rep.value / f.l2_weight()
