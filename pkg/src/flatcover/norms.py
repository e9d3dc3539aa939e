"""Exponential sums, L^p norms on boxes, and decoupling ratios.

The central object is a finite sum f(x) = sum_xi a_xi e(x . (xi, phi(xi)))
with planar frequencies xi lifted onto the graph of the phase.  Norms
over a box of side R use the L^p_# convention (normalize by the box
volume, then take the p-th root).

For even p the computation is exact: lifted frequencies are snapped to
the (1/R)-grid, reduced per axis (translation and gcd), and |f|^p is a
trigonometric polynomial whose mean equals its lattice average once the
lattice resolves the frequency extent; one small FFT per sum replaces
any dense spatial grid.  Product-structured frequency sets with
additively split lift (separable phases, or single-row sets) factor as
f = g1(x1,x3) g2(x2,x3), and the norm reduces to two planar FFTs glued
along the shared third axis.  A quadratic-count fallback via pair
frequencies covers p=4 when neither route fits in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.fft import ifft2, ifftn, next_fast_len

from .cover import FlatCover
from .geometry import Parallelogram
from .poly2 import BivariatePoly, hyperbolic_phase

_FFT_BUDGET = 1 << 26  # complex entries per field, ~1 GB at complex128
_PAIR_BUDGET = 12_000_000  # frequency pairs for the p=4 fallback


@dataclass(frozen=True)
class Box3:
    """Axis cube in physical space: center and side length."""

    center: Tuple[float, float, float]
    side: float


@dataclass(frozen=True)
class Factor:
    """One axis of a product frequency set: planar coordinates along a
    single axis, their weights, and their additive share of the lift."""

    axis: int
    values: np.ndarray
    weights: np.ndarray
    heights: np.ndarray


@dataclass
class ExpSum:
    """Weighted exponential sum over lifted planar frequencies.

    ``lift`` optionally pins the heights instead of evaluating the
    phase, for sums whose lift was snapped once up front so that whole
    and per-member norms see the same function.
    """

    phase: BivariatePoly
    freqs: np.ndarray
    weights: np.ndarray
    name: str = ""
    factors: Optional[Tuple[Factor, Factor]] = None
    lift: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.freqs = np.atleast_2d(np.asarray(self.freqs, dtype=float))
        self.weights = np.asarray(self.weights, dtype=complex).ravel()
        if self.freqs.shape[0] != self.weights.shape[0]:
            raise ValueError("frequency and weight counts differ")
        if self.freqs.shape[1] != 2:
            raise ValueError("frequencies must be planar points")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if len(np.unique(self.freqs, axis=0)) != len(self.freqs):
            raise ValueError("frequencies must be distinct")
        if self.lift is not None:
            self.lift = np.asarray(self.lift, dtype=float).ravel()
            if len(self.lift) != len(self.weights):
                raise ValueError("lift and weight counts differ")

    def __len__(self) -> int:
        return len(self.weights)

    def lifted(self) -> np.ndarray:
        """(N, 3) array of (xi1, xi2, height)."""
        if self.lift is not None:
            return np.column_stack([self.freqs, self.lift])
        h = np.asarray(self.phase.eval(self.freqs[:, 0], self.freqs[:, 1]), dtype=float)
        return np.column_stack([self.freqs, h])

    def subset(self, idx: np.ndarray) -> "ExpSum":
        sub = ExpSum(
            self.phase, self.freqs[idx], self.weights[idx], name=self.name,
            lift=None if self.lift is None else self.lift[idx],
        )
        sub.factors = _try_product_factors(self, np.asarray(idx))
        return sub

    def l2_weight(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.weights) ** 2)))


def _separable_split(phi: BivariatePoly):
    """(psi1, psi2) callables with phi = psi1(x)+psi2(y), or None."""
    if any(j >= 1 and k >= 1 for (j, k) in phi.coeffs):
        return None
    c1 = {(j, 0): a for (j, k), a in phi.coeffs.items() if k == 0}
    c2 = {(0, k): a for (j, k), a in phi.coeffs.items() if k >= 1}
    p1 = BivariatePoly(phi.degree, c1) if c1 else BivariatePoly(0, {})
    p2 = BivariatePoly(phi.degree, c2) if c2 else BivariatePoly(0, {})
    return (
        lambda x: np.asarray(p1.eval(np.asarray(x), 0.0), dtype=float),
        lambda y: np.asarray(p2.eval(0.0, np.asarray(y)), dtype=float),
    )


def product_exp_sum(
    phase: BivariatePoly,
    xs: np.ndarray,
    ys: np.ndarray,
    x_weights: Optional[np.ndarray] = None,
    y_weights: Optional[np.ndarray] = None,
    name: str = "",
) -> ExpSum:
    """Exponential sum on the product set xs x ys with product weights.

    When the lift splits additively across the two axes (separable
    phase, or a singleton factor) the product structure is recorded and
    later norm computations factor accordingly.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    xw = np.ones(len(xs), dtype=complex) if x_weights is None else np.asarray(
        x_weights, dtype=complex
    )
    yw = np.ones(len(ys), dtype=complex) if y_weights is None else np.asarray(
        y_weights, dtype=complex
    )
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    freqs = np.column_stack([gx.ravel(), gy.ravel()])
    weights = np.outer(xw, yw).ravel()
    factors = None
    if len(ys) == 1:
        h1 = np.asarray(phase.eval(xs, ys[0]), dtype=float)
        factors = (Factor(0, xs, xw, h1), Factor(1, ys, yw, np.zeros(1)))
    elif len(xs) == 1:
        h2 = np.asarray(phase.eval(xs[0], ys), dtype=float)
        factors = (Factor(0, xs, xw, np.zeros(1)), Factor(1, ys, yw, h2))
    else:
        split = _separable_split(phase)
        if split is not None:
            factors = (
                Factor(0, xs, xw, split[0](xs)),
                Factor(1, ys, yw, split[1](ys)),
            )
    out = ExpSum(phase, freqs, weights, name=name)
    out.factors = factors
    return out


def _try_product_factors(parent: ExpSum, idx: np.ndarray):
    """Factors for a subset of a product sum, if the subset is itself a
    product of index sets; None otherwise."""
    if parent.factors is None or len(idx) == 0:
        return None
    f1, f2 = parent.factors
    k2 = len(f2.values)
    ii = idx // k2
    jj = idx % k2
    iu = np.unique(ii)
    ju = np.unique(jj)
    if len(iu) * len(ju) != len(idx):
        return None
    expect = (iu[:, None] * k2 + ju[None, :]).ravel()
    if not np.array_equal(np.sort(idx), np.sort(expect)):
        return None
    return (
        Factor(f1.axis, f1.values[iu], f1.weights[iu], f1.heights[iu]),
        Factor(f2.axis, f2.values[ju], f2.weights[ju], f2.heights[ju]),
    )


def snap_lift(f: ExpSum, box_side: float) -> ExpSum:
    """Copy of the sum with heights snapped to the (1/box_side)-grid.

    Snapping happens once, at the source, so that the whole sum and
    every member piece share identical (box-periodic) heights; the
    displacement is at most half a grid step, which keeps the lifted
    points inside the usual surface neighborhoods.  Product sums are
    snapped factor by factor, preserving the separable fast path.
    """
    r = float(box_side)
    if r <= 0:
        raise ValueError("box side must be positive")
    if f.factors is not None:
        f1, f2 = f.factors
        h1 = np.round(f1.heights * r) / r
        h2 = np.round(f2.heights * r) / r
        lift = (h1[:, None] + h2[None, :]).ravel()
        out = ExpSum(f.phase, f.freqs, f.weights, name=f.name, lift=lift)
        out.factors = (
            Factor(f1.axis, f1.values, f1.weights, h1),
            Factor(f2.axis, f2.values, f2.weights, h2),
        )
        return out
    heights = f.lifted()[:, 2]
    out = ExpSum(f.phase, f.freqs, f.weights, name=f.name,
                 lift=np.round(heights * r) / r)
    return out


# -- grid fields (honest direct evaluation at small scale) ---------------


@dataclass
class GridField:
    """Complex samples of an exponential sum on an n^3 box lattice."""

    box: Box3
    n: int
    values: np.ndarray


def sample_exp_sum(f: ExpSum, box: Box3, n: int) -> GridField:
    """Evaluate the sum directly on the n^3 midpoint lattice of the box.

    Raises on aliasing (n below twice the box side times the largest
    lifted frequency component) and on grids too large to hold.
    """
    lifted = f.lifted()
    max_freq = float(np.max(np.abs(lifted))) if len(lifted) else 0.0
    if n < 2 * box.side * max_freq:
        raise ValueError(
            f"aliasing: n={n} below the Nyquist margin "
            f"2*side*maxfreq={2 * box.side * max_freq:.1f}"
        )
    if n ** 3 > 1 << 24:
        raise ValueError("grid too large for direct evaluation; lower n")
    axes = [
        box.center[i] - box.side / 2 + box.side * (np.arange(n) + 0.5) / n
        for i in range(3)
    ]
    vals = np.empty((n, n, n), dtype=complex)
    # phase splits as x1.nu1 + (x2,x3).(nu2,nu3); evaluate per x1-slab
    tail = np.exp(
        2j
        * np.pi
        * (
            axes[1][:, None, None] * lifted[None, None, :, 1]
            + axes[2][None, :, None] * lifted[None, None, :, 2]
        )
    )  # (n, n, N)
    for i1, x1 in enumerate(axes[0]):
        head = np.exp(2j * np.pi * x1 * lifted[:, 0]) * f.weights
        vals[i1] = tail @ head
    return GridField(box, n, vals)


def lp_norm(field: GridField, p: float, normalized: bool = True) -> float:
    """Riemann L^p norm of the sampled field; L^p_# when normalized."""
    if p < 1:
        raise ValueError("p must be at least 1")
    a = np.abs(field.values)
    if math.isinf(p):
        return float(a.max())
    val = float(np.mean(a ** p)) ** (1.0 / p)
    if not normalized:
        val *= field.box.side ** (3.0 / p)
    return val


# -- the exact reduced-lattice engine -------------------------------------


@dataclass(frozen=True)
class NormReport:
    value: float
    p: float
    box_side: float
    normalized: bool
    exact: bool
    method: str
    snap_max: float
    lattice_dims: Tuple[int, ...]
    note: str = ""


def _snap_merge(lifted: np.ndarray, weights: np.ndarray, r_side: float):
    ints = np.round(r_side * lifted).astype(np.int64)
    snap_max = float(np.max(np.abs(ints / r_side - lifted))) if len(lifted) else 0.0
    uniq, inv = np.unique(ints, axis=0, return_inverse=True)
    w = np.zeros(len(uniq), dtype=complex)
    np.add.at(w, inv, weights)
    return uniq, w, snap_max


def _reduce_axes(ints: np.ndarray) -> np.ndarray:
    out = ints.copy()
    for ax in range(out.shape[1]):
        col = out[:, ax]
        col -= col.min()
        nz = col[col > 0]
        if len(nz):
            g = int(np.gcd.reduce(nz))
            if g > 1:
                col //= g
        out[:, ax] = col
    return out


def _best_shear(x: np.ndarray, h: np.ndarray) -> int:
    """Integer lam minimizing the extent of h - lam*x.

    The extent is convex in lam (max minus min of affine functions), so
    a bracketed binary search around the least-squares slope finds the
    minimizer; lam = 0 is kept when nothing improves.
    """
    ptp = int(x.max() - x.min())
    if ptp == 0:
        return 0

    def ext(lam: int) -> int:
        r = h - lam * x
        return int(r.max() - r.min())

    xf = x.astype(float)
    hf = h.astype(float)
    xc = xf - xf.mean()
    s = float((xc * (hf - hf.mean())).sum() / (xc * xc).sum())
    rs = int(round(s))
    w = ext(rs) // ptp + 2
    lo, hi = rs - w, rs + w
    while lo < hi:
        mid = (lo + hi) // 2
        if ext(mid) <= ext(mid + 1):
            hi = mid
        else:
            lo = mid + 1
    return lo if ext(lo) < ext(0) else 0


def _shear_reduce(ints: np.ndarray) -> np.ndarray:
    """Shear the height column by integer multiples of the planar ones.

    Frequency shears are unimodular changes of variables on the torus:
    one-period means of |f|^p are invariant, while the height extent
    (hence the exact-quadrature grid) typically collapses by orders of
    magnitude for lifts of smooth phases.
    """
    if len(ints) < 2:
        return ints
    out = ints.copy()
    last = out.shape[1] - 1
    for _ in range(2):
        changed = False
        for src in range(last):
            lam = _best_shear(out[:, src], out[:, last])
            if lam != 0:
                out[:, last] = out[:, last] - lam * out[:, src]
                changed = True
        if not changed:
            break
    return out


def _mean_abs_pow(field: np.ndarray, p: int) -> float:
    a = np.abs(field)
    a **= p
    return float(a.mean())


def _fft_mean_pow(ints: np.ndarray, weights: np.ndarray, q: int,
                  budget: int = _FFT_BUDGET):
    """mean |f|^{2q} over one period, exactly, via a zero-padded FFT on
    the reduced integer lattice.  Returns (value, dims)."""
    ext = ints.max(axis=0) if len(ints) else np.zeros(3, dtype=np.int64)
    live = [ax for ax in range(ints.shape[1]) if ext[ax] > 0]
    dims = tuple(next_fast_len(int(q * ext[ax] + 1)) for ax in live)
    total = int(np.prod(dims)) if dims else 1
    if total > budget:
        raise ValueError(
            f"reduced lattice {dims} exceeds the in-memory FFT budget; "
            "the sum has no dense exact path at this scale"
        )
    z = np.zeros(dims if dims else (1,), dtype=complex)
    if dims:
        np.add.at(z, tuple(ints[:, ax] for ax in live), weights)
        g = ifftn(z) * total
    else:
        g = np.array([weights.sum()])
    return _mean_abs_pow(g, 2 * q), dims


def _pairs_mean_pow4(ints: np.ndarray, weights: np.ndarray) -> float:
    """mean |f|^4 via Parseval on the pair sum f^2, exact for any
    integer frequencies: sum of |sum_{pairs adding to k} a a'|^2."""
    n = len(ints)
    pair_ints = (ints[:, None, :] + ints[None, :, :]).reshape(n * n, 3)
    pair_w = (weights[:, None] * weights[None, :]).reshape(n * n)
    uniq, inv = np.unique(pair_ints, axis=0, return_inverse=True)
    acc = np.zeros(len(uniq), dtype=complex)
    np.add.at(acc, inv, pair_w)
    return float(np.sum(np.abs(acc) ** 2))


def _factor_ints(fac: Factor, r_side: float):
    """Snapped, merged (coordinate, height) integer pairs for one factor."""
    pts = np.column_stack([fac.values, fac.heights])
    ints = np.round(r_side * pts).astype(np.int64)
    snap = float(np.max(np.abs(ints / r_side - pts))) if len(pts) else 0.0
    uniq, inv = np.unique(ints, axis=0, return_inverse=True)
    w = np.zeros(len(uniq), dtype=complex)
    np.add.at(w, inv, fac.weights)
    return uniq, w, snap


def _separable_mean_pow(f: ExpSum, r_side: float, q: int,
                        budget: int = _FFT_BUDGET):
    """mean |f|^{2q} for a product sum via two planar FFT fields sharing
    the lift axis.  Returns (value, dims, snap_max)."""
    f1, f2 = f.factors
    i1, w1, s1 = _factor_ints(f1, r_side)
    i2, w2, s2 = _factor_ints(f2, r_side)
    reduced = []
    for ints in (i1, i2):
        ints = _reduce_axes(ints)
        ints = _shear_reduce(ints)
        ints[:, 1] -= ints[:, 1].min()
        reduced.append(ints)
    i1, i2 = reduced
    heights = np.concatenate([i1[:, 1], i2[:, 1]])
    nz = heights[heights > 0]
    if len(nz):
        g3 = int(np.gcd.reduce(nz))
        if g3 > 1:
            i1[:, 1] //= g3
            i2[:, 1] //= g3
    e1 = int(i1[:, 0].max())
    e2 = int(i2[:, 0].max())
    e3 = int(i1[:, 1].max() + i2[:, 1].max())
    n1 = next_fast_len(q * e1 + 1)
    n2 = next_fast_len(q * e2 + 1)
    n3 = next_fast_len(q * e3 + 1)
    if max(n1, 1) * n3 + max(n2, 1) * n3 > 2 * budget:
        raise ValueError("separable fields exceed the FFT budget")

    def slice_means(ints, w, n_axis):
        z = np.zeros((n_axis, n3), dtype=complex)
        np.add.at(z, (ints[:, 0], ints[:, 1]), w)
        g = ifft2(z) * (n_axis * n3)
        a = np.abs(g)
        a **= 2 * q
        return a.mean(axis=0)

    p_of_x3 = slice_means(i1, w1, n1)
    q_of_x3 = slice_means(i2, w2, n2)
    return float(np.mean(p_of_x3 * q_of_x3)), (n1, n2, n3), max(s1, s2)


def _lattice_max(f: ExpSum, r_side: float) -> Tuple[float, Tuple[int, ...]]:
    """max |f| over a dense-enough period lattice (a lower bound for the
    true sup, adequate for bounded-ratio checks)."""
    ints, w, _ = _snap_merge(f.lifted(), f.weights, r_side)
    ints = _reduce_axes(_shear_reduce(_reduce_axes(ints)))
    ext = ints.max(axis=0)
    live = [ax for ax in range(3) if ext[ax] > 0]
    dims = tuple(next_fast_len(int(4 * ext[ax] + 5)) for ax in live)
    total = int(np.prod(dims)) if dims else 1
    if total > _FFT_BUDGET:
        raise ValueError("lattice too large for the max-norm scan")
    z = np.zeros(dims if dims else (1,), dtype=complex)
    if dims:
        np.add.at(z, tuple(ints[:, ax] for ax in live), w)
        g = ifftn(z) * total
    else:
        g = np.array([w.sum()])
    return float(np.abs(g).max()), dims


def expsum_lp(
    f: ExpSum,
    p: float,
    box_side: float,
    normalized: bool = True,
    budget: int = _FFT_BUDGET,
) -> NormReport:
    """L^p norm of the sum over a box of side ``box_side``.

    Frequencies are snapped to the (1/box_side)-grid, making the sum
    periodic; for even integer p the one-period integral is then exact.
    The method chosen (Parseval, separable FFT, pair counting, plain
    FFT) is recorded in the report along with the worst snap distance.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    r = float(box_side)
    if r <= 0:
        raise ValueError("box side must be positive")
    scale = r ** (3.0 / p) if (not normalized and not math.isinf(p)) else 1.0

    if math.isinf(p):
        val, dims = _lattice_max(f, r)
        return NormReport(val, p, r, normalized, False, "lattice-max", 0.0, dims,
                          note="max over the period lattice (lower bound of sup)")

    ints, w, snap = _snap_merge(f.lifted(), f.weights, r)
    ints = _reduce_axes(_shear_reduce(_reduce_axes(ints)))

    if p == 2:
        val = float(np.sqrt(np.sum(np.abs(w) ** 2)))
        return NormReport(val * scale, p, r, normalized, True, "parseval",
                          snap, ())

    if float(p).is_integer() and int(p) % 2 == 0:
        q = int(p) // 2
        if f.factors is not None:
            try:
                mean_pow, dims, snap2 = _separable_mean_pow(f, r, q, budget)
                return NormReport(mean_pow ** (1.0 / p) * scale, p, r, normalized,
                                  True, "separable", snap2, dims)
            except ValueError:
                pass
        ext = ints.max(axis=0)
        dims_est = 1
        for ax in range(3):
            if ext[ax] > 0:
                dims_est *= next_fast_len(int(q * ext[ax] + 1))
        if q == 2 and (dims_est > budget or len(ints) ** 2 <= min(
                _PAIR_BUDGET, dims_est)):
            if len(ints) ** 2 > _PAIR_BUDGET:
                raise ValueError(
                    "no exact path: FFT lattice and pair table both exceed budget"
                )
            mean_pow = _pairs_mean_pow4(ints, w)
            return NormReport(mean_pow ** 0.25 * scale, p, r, normalized, True,
                              "pairs", snap, ())
        mean_pow, dims = _fft_mean_pow(ints, w, q, budget)
        return NormReport(mean_pow ** (1.0 / p) * scale, p, r, normalized, True,
                          "fft", snap, dims)

    # non-even p: spectrally accurate periodic quadrature, flagged inexact
    m = int(math.ceil(p)) + 2
    ext = ints.max(axis=0)
    live = [ax for ax in range(3) if ext[ax] > 0]
    dims = tuple(next_fast_len(int(m * ext[ax] + 1)) for ax in live)
    total = int(np.prod(dims)) if dims else 1
    if total > budget:
        raise ValueError("quadrature lattice exceeds budget for non-even p")
    z = np.zeros(dims if dims else (1,), dtype=complex)
    if dims:
        np.add.at(z, tuple(ints[:, ax] for ax in live), w)
        g = ifftn(z) * total
    else:
        g = np.array([w.sum()])
    val = _mean_abs_pow(g, p) ** (1.0 / p)
    return NormReport(val * scale, p, r, normalized, False, "riemann", snap, dims,
                      note="periodic trapezoid quadrature; exact only for even p")


# -- decoupling ratios -----------------------------------------------------


@dataclass(frozen=True)
class DecoupleReport:
    ratio: float
    lhs: float
    rhs: float
    p: float
    box_side: float
    delta: float
    members_used: int
    min_memberships: int
    max_memberships: int
    snap_max: float
    exact: bool


def _grid_assignments(pts: np.ndarray, grid, tol: float):
    """(point index, cell i, cell j) triples for tiles within distance
    tol of each point.  Distances are exact (tiles are rectangles in
    their own frame).  tol = 0 means sharp half-open containment: each
    point lands in at most one tile, with the outer boundary closed."""
    ct, st = math.cos(grid.theta), math.sin(grid.theta)
    rel = pts - np.asarray(grid.anchor)
    fx = rel[:, 0] * ct + rel[:, 1] * st
    fy = -rel[:, 0] * st + rel[:, 1] * ct
    ci = np.floor(fx / grid.w).astype(np.int64)
    cj = np.floor(fy / grid.h).astype(np.int64)
    if tol <= 0.0:
        slack = 1e-12 * max(abs(grid.i0), abs(grid.i1), abs(grid.j0), abs(grid.j1), 1)
        ci[(ci == grid.i1) & (fx / grid.w <= grid.i1 + slack)] -= 1
        cj[(cj == grid.j1) & (fy / grid.h <= grid.j1 + slack)] -= 1
        ci[(ci == grid.i0 - 1) & (fx / grid.w >= grid.i0 - slack)] += 1
        cj[(cj == grid.j0 - 1) & (fy / grid.h >= grid.j0 - slack)] += 1
        inside = (ci >= grid.i0) & (ci < grid.i1) & (cj >= grid.j0) & (cj < grid.j1)
        if grid.keep is not None and inside.any():
            sel = np.flatnonzero(inside)
            kept = grid.keep[ci[sel] - grid.i0, cj[sel] - grid.j0]
            inside[sel[~kept]] = False
        k = np.flatnonzero(inside)
        return k, ci[k], cj[k]
    out_p, out_i, out_j = [], [], []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ii = ci + di
            jj = cj + dj
            dx = np.maximum(np.maximum(ii * grid.w - fx, fx - (ii + 1) * grid.w), 0.0)
            dy = np.maximum(np.maximum(jj * grid.h - fy, fy - (jj + 1) * grid.h), 0.0)
            near = (dx * dx + dy * dy) <= tol * tol * (1 + 1e-12)
            inside = near & (ii >= grid.i0) & (ii < grid.i1) & (jj >= grid.j0) & (jj < grid.j1)
            if grid.keep is not None and inside.any():
                sel = np.flatnonzero(inside)
                kept = grid.keep[ii[sel] - grid.i0, jj[sel] - grid.j0]
                inside[sel[~kept]] = False
            k = np.flatnonzero(inside)
            out_p.append(k)
            out_i.append(ii[k])
            out_j.append(jj[k])
    return np.concatenate(out_p), np.concatenate(out_i), np.concatenate(out_j)


def _parallelogram_distance(pts: np.ndarray, box: Parallelogram) -> np.ndarray:
    t = box.affine_coords(pts)
    inside = np.all(np.abs(t) <= 1.0, axis=1)
    verts = box.vertices()
    best = np.full(len(pts), np.inf)
    for a in range(4):
        p0 = verts[a]
        p1 = verts[(a + 1) % 4]
        seg = p1 - p0
        tt = np.clip(((pts - p0) @ seg) / (seg @ seg), 0.0, 1.0)
        proj = p0 + tt[:, None] * seg
        best = np.minimum(best, np.linalg.norm(pts - proj, axis=1))
    best[inside] = 0.0
    return best


def assign_frequencies(f: ExpSum, cover: FlatCover, tol: Optional[float] = None):
    """Subsets of frequency indices per cover member whose planar slab
    neighborhood contains the lifted point (distance at most tol, the
    cover's delta by default).  Raises if any frequency is uncovered."""
    tol = cover.delta if tol is None else tol
    pts = f.freqs
    counts = np.zeros(len(pts), dtype=np.int64)
    subsets = []
    for part in cover.parts:
        local = part.local_points(pts)
        for grid in part.groups:
            pidx, ii, jj = _grid_assignments(local, grid, tol)
            if len(pidx) == 0:
                continue
            key = (ii - grid.i0) * grid.nj + (jj - grid.j0)
            order = np.argsort(key, kind="stable")
            key = key[order]
            pidx = pidx[order]
            cuts = np.flatnonzero(np.diff(key)) + 1
            for block in np.split(pidx, cuts):
                subsets.append(block)
                counts[block] += 1
    for box in cover.loose:
        d = _parallelogram_distance(pts, box)
        block = np.flatnonzero(d <= tol * (1 + 1e-12))
        if len(block):
            subsets.append(block)
            counts[block] += 1
    if len(pts) and counts.min() < 1:
        bad = int(np.argmin(counts))
        raise ValueError(
            f"frequency ({pts[bad, 0]:.6g}, {pts[bad, 1]:.6g}) uncovered"
        )
    return subsets, counts


def decoupling_report(
    f: ExpSum,
    cover: FlatCover,
    p: float,
    box_side: Optional[float] = None,
    jobs: int = 1,
    tol: Optional[float] = None,
) -> DecoupleReport:
    """The ratio ||f||_p / (sum_S ||f_S||_p^2)^(1/2) with full detail."""
    r = 1.0 / cover.delta if box_side is None else float(box_side)
    subsets, counts = assign_frequencies(f, cover, tol)
    lhs_rep = expsum_lp(f, p, r)
    exact = lhs_rep.exact
    snap = lhs_rep.snap_max

    def member_norm(idx: np.ndarray) -> float:
        nonlocal exact, snap
        if len(idx) == 1:
            return float(abs(f.weights[idx[0]]))
        rep = expsum_lp(f.subset(idx), p, r)
        exact = exact and rep.exact
        snap = max(snap, rep.snap_max)
        return rep.value

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            norms = list(pool.map(member_norm, subsets))
    else:
        norms = [member_norm(s) for s in subsets]
    rhs = float(np.sqrt(np.sum(np.square(norms))))
    ratio = lhs_rep.value / rhs if rhs > 0 else math.inf
    return DecoupleReport(
        ratio, lhs_rep.value, rhs, p, r, cover.delta, len(norms),
        int(counts.min()) if len(counts) else 0,
        int(counts.max()) if len(counts) else 0,
        snap, exact,
    )


def decoupling_ratio(
    f: ExpSum,
    cover: FlatCover,
    p: float,
    box_side: Optional[float] = None,
    jobs: int = 1,
    tol: Optional[float] = None,
) -> float:
    return decoupling_report(f, cover, p, box_side, jobs, tol).ratio


# -- sweeps ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepReport:
    """Least-squares exponent fit: ratio ~ C * delta^(-slope)."""

    points: Tuple[Tuple[float, float], ...]
    slope: float
    intercept: float
    residual: float


def slope_fit(points: Sequence[Tuple[float, float]]) -> SweepReport:
    pts = [(float(d), float(rho)) for d, rho in points]
    if len(pts) < 4:
        raise ValueError("slope fit needs at least 4 sweep points")
    if any(d <= 0 or rho <= 0 for d, rho in pts):
        raise ValueError("sweep points must be positive")
    x = np.log2([1.0 / d for d, _ in pts])
    y = np.log2([rho for _, rho in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return SweepReport(tuple(pts), float(slope), float(intercept), resid)


# -- extremal examples -----------------------------------------------------


def _require_dyadic_inv(delta: float) -> int:
    k = math.log2(1.0 / delta)
    if abs(k - round(k)) > 1e-9:
        raise ValueError("1/delta must be a power of two")
    return int(round(k))


def line_example(delta: float) -> ExpSum:
    """Unit weights on (j*sqrt(delta), 0): the axis line of the saddle,
    the input that forces the log-loss against any square partition."""
    _require_dyadic_inv(delta)
    n = int(math.floor(delta ** -0.5 + 1e-9))
    xs = np.arange(n) * math.sqrt(delta)
    return product_exp_sum(hyperbolic_phase(), xs, np.zeros(1), name="line")


def bump_example(phi: BivariatePoly, region: Tuple[float, float, float, float],
                 delta: float) -> ExpSum:
    """Unit weights on the delta-net of an axis region of the square."""
    xmin, ymin, xmax, ymax = region
    if not (0 - 1e-9 <= xmin <= xmax <= 1 + 1e-9 and 0 - 1e-9 <= ymin <= ymax <= 1 + 1e-9):
        raise ValueError("region must sit inside the unit square")
    xs = xmin + delta * np.arange(int(math.floor((xmax - xmin) / delta + 1e-9)) + 1)
    ys = ymin + delta * np.arange(int(math.floor((ymax - ymin) / delta + 1e-9)) + 1)
    return product_exp_sum(phi, xs, ys, name="bump")


def strip_example(delta: float, a: int) -> ExpSum:
    """Unit weights on the delta-net of the a-th horizontal delta-strip,
    lifted to the saddle: one Dirichlet row in disguise."""
    inv = 1.0 / delta
    if not (0 <= a < inv):
        raise ValueError("strip index a must satisfy 0 <= a < 1/delta")
    _require_dyadic_inv(delta)
    xs = delta * np.arange(int(round(inv)))
    ys = np.array([a * delta])
    return product_exp_sum(hyperbolic_phase(), xs, ys, name=f"strip-{a}")


def random_product_example(
    phi: BivariatePoly, delta: float, rng: np.random.Generator
) -> ExpSum:
    """delta-net of the square with random complex product weights;
    keeps the separable fast path available at small delta."""
    n = int(round(1.0 / delta)) + 1
    xs = delta * np.arange(n)
    ys = delta * np.arange(n)
    xw = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    yw = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return product_exp_sum(phi, xs, ys, xw, yw, name="random-product")


_ST_PHASES = (
    {(1, 1): 1.0},
    {(2, 0): 1.0, (0, 2): -1.0},
)


def stein_tomas_ratio(f: ExpSum, delta: float, p: float) -> float:
    """delta^(1-3/p) ||f||_{L^p_#(B_{1/delta})} / l2(weights).

    The normalization discretizes the restriction inequality with
    unit-height delta-cube densities: the inequality then reads
    ratio <= C uniformly in delta.  For p = infinity the norm is the
    lattice max and the prefactor is delta.
    """
    if not math.isinf(p) and p < 4:
        raise ValueError("p must be at least 4 (or infinity)")
    canon = {jk: v for jk, v in f.phase.coeffs.items() if v != 0 and sum(jk) == 2}
    if canon not in [dict(d) for d in _ST_PHASES] or any(
        sum(jk) > 2 and abs(v) > 0 for jk, v in f.phase.coeffs.items()
    ):
        raise ValueError("phase must be the saddle in one of its two normal forms")
    rep = expsum_lp(f, p, 1.0 / delta)
    prefactor = delta if math.isinf(p) else delta ** (1.0 - 3.0 / p)
    return prefactor * rep.value / f.l2_weight()
