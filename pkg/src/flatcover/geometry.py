"""Parallelograms, rotated tilings, and convex clipping.

Everything here is plain planar geometry: no polynomials, no flatness.
A ``Parallelogram`` is stored as a center plus two half-edge vectors, so
its vertex set is ``center +- e1 +- e2`` and containment questions reduce
to affine coordinates with respect to the edge matrix ``[e1 e2]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

BBox = Tuple[float, float, float, float]
UNIT_SQUARE: BBox = (0.0, 0.0, 1.0, 1.0)

_MEMBERSHIP_EPS = 0.0  # half-open convention is applied exactly
_CONTAIN_TOL = 1e-9  # relative slack for closed containment tests


@dataclass(frozen=True)
class Parallelogram:
    """Center plus half-edge vectors; vertices are center +- e1 +- e2.

    ``alpha`` and ``beta`` are optional labels recording which tiling of
    a cover construction the box came from; they do not affect geometry.
    """

    center: Tuple[float, float]
    e1: Tuple[float, float]
    e2: Tuple[float, float]
    alpha: Optional[float] = None
    beta: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "e1", (float(self.e1[0]), float(self.e1[1])))
        object.__setattr__(self, "e2", (float(self.e2[0]), float(self.e2[1])))

    # -- derived quantities -------------------------------------------

    @property
    def edge_matrix(self) -> np.ndarray:
        """Columns are the half-edge vectors."""
        return np.column_stack([self.e1, self.e2])

    def vertices(self) -> np.ndarray:
        c = np.asarray(self.center)
        e1 = np.asarray(self.e1)
        e2 = np.asarray(self.e2)
        return np.array([c - e1 - e2, c + e1 - e2, c + e1 + e2, c - e1 + e2])

    def side_lengths(self) -> Tuple[float, float]:
        """Full side lengths (2|e1|, 2|e2|)."""
        return (
            2.0 * float(np.hypot(*self.e1)),
            2.0 * float(np.hypot(*self.e2)),
        )

    def area(self) -> float:
        m = self.edge_matrix
        return 4.0 * abs(float(np.linalg.det(m)))

    def diameter(self) -> float:
        v = self.vertices()
        c = np.asarray(self.center)
        return 2.0 * float(np.max(np.linalg.norm(v - c, axis=1)))

    def affine_coords(self, points) -> np.ndarray:
        """Coordinates x with point = center + x1*e1 + x2*e2.

        Inside the closed parallelogram means max|x| <= 1.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        m = self.edge_matrix
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det == 0.0:
            raise ValueError("degenerate parallelogram (zero area)")
        inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
        rel = pts - np.asarray(self.center)
        return rel @ inv.T

    def contains(self, points, tol: float = _CONTAIN_TOL) -> np.ndarray:
        """Closed containment with a small relative tolerance."""
        x = self.affine_coords(points)
        return np.all(np.abs(x) <= 1.0 + tol, axis=-1)

    def bounding_box(self) -> BBox:
        v = self.vertices()
        return (
            float(v[:, 0].min()),
            float(v[:, 1].min()),
            float(v[:, 0].max()),
            float(v[:, 1].max()),
        )

    # -- serialization -------------------------------------------------

    def to_json_dict(self) -> dict:
        out = {"center": list(self.center), "e1": list(self.e1), "e2": list(self.e2)}
        if self.alpha is not None:
            out["alpha"] = self.alpha
        if self.beta is not None:
            out["beta"] = self.beta
        return out

    @staticmethod
    def from_json_dict(obj: dict) -> "Parallelogram":
        try:
            return Parallelogram(
                tuple(obj["center"]),
                tuple(obj["e1"]),
                tuple(obj["e2"]),
                alpha=obj.get("alpha"),
                beta=obj.get("beta"),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed parallelogram record: {exc}") from exc


def axis_rectangle(x0: float, y0: float, x1: float, y1: float) -> Parallelogram:
    """Axis-aligned rectangle [x0,x1] x [y0,y1]."""
    return Parallelogram(
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0),
        ((x1 - x0) / 2.0, 0.0),
        (0.0, (y1 - y0) / 2.0),
    )


def rotated_rectangle(center, w: float, h: float, theta: float, **labels) -> Parallelogram:
    """Rectangle with full side w along angle theta and full side h across."""
    ct, st = math.cos(theta), math.sin(theta)
    return Parallelogram(
        tuple(center),
        (0.5 * w * ct, 0.5 * w * st),
        (-0.5 * h * st, 0.5 * h * ct),
        **labels,
    )


def dilate(s: Parallelogram, factor: float) -> Parallelogram:
    """Scale both half-edges about the center."""
    if factor <= 0:
        raise ValueError("dilation factor must be positive")
    return replace(
        s,
        e1=(factor * s.e1[0], factor * s.e1[1]),
        e2=(factor * s.e2[0], factor * s.e2[1]),
    )


def point_membership(s: Parallelogram, point) -> bool:
    """Half-open membership: the lower/left edges (affine coordinate -1)
    belong to the box, the upper/right edges (coordinate +1) do not.

    With this convention the tiles of any congruent tiling partition the
    plane: every point belongs to exactly one tile.
    """
    x = s.affine_coords(point)[0]
    return bool(np.all(x >= -1.0) and np.all(x < 1.0))


def comparable(s1: Parallelogram, s2: Parallelogram, a_const: float) -> bool:
    """Mutual containment after dilating by 2*a_const.

    True iff s1 is inside the (2A)-dilate of s2 and vice versa.  The
    containment test is exact vertex membership in affine coordinates,
    so the result is invariant under applying one affine map to both
    boxes (up to roundoff).
    """
    if a_const <= 0:
        raise ValueError("comparability constant must be positive")
    big1 = dilate(s1, 2.0 * a_const)
    big2 = dilate(s2, 2.0 * a_const)
    return bool(np.all(big2.contains(s1.vertices())) and np.all(big1.contains(s2.vertices())))


# -- affine maps ------------------------------------------------------


@dataclass(frozen=True)
class AffineMap2:
    """Invertible affine map x -> mat @ x + off on the plane."""

    mat: Tuple[Tuple[float, float], Tuple[float, float]]
    off: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        m = np.asarray(self.mat, dtype=float)
        if m.shape != (2, 2):
            raise ValueError("mat must be 2x2")
        if abs(np.linalg.det(m)) < 1e-300:
            raise ValueError("affine map must be invertible")
        object.__setattr__(self, "mat", ((m[0, 0], m[0, 1]), (m[1, 0], m[1, 1])))
        object.__setattr__(self, "off", (float(self.off[0]), float(self.off[1])))

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.mat, dtype=float)

    @property
    def offset(self) -> np.ndarray:
        return np.asarray(self.off, dtype=float)

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix.T + self.offset

    def apply_box(self, s: Parallelogram) -> Parallelogram:
        m = self.matrix
        return replace(
            s,
            center=tuple(self.apply(np.asarray(s.center))),
            e1=tuple(m @ np.asarray(s.e1)),
            e2=tuple(m @ np.asarray(s.e2)),
        )

    def inverse(self) -> "AffineMap2":
        m = np.linalg.inv(self.matrix)
        return AffineMap2(tuple(map(tuple, m)), tuple(-m @ self.offset))

    def compose(self, inner: "AffineMap2") -> "AffineMap2":
        """self after inner: x -> self(inner(x))."""
        m = self.matrix @ inner.matrix
        o = self.matrix @ inner.offset + self.offset
        return AffineMap2(tuple(map(tuple, m)), tuple(o))

    @staticmethod
    def identity() -> "AffineMap2":
        return AffineMap2(((1.0, 0.0), (0.0, 1.0)), (0.0, 0.0))

    @staticmethod
    def rotation(theta: float) -> "AffineMap2":
        c, s = math.cos(theta), math.sin(theta)
        return AffineMap2(((c, -s), (s, c)), (0.0, 0.0))


# -- rotated grid tilings ----------------------------------------------


@dataclass
class TileGrid:
    """A congruent rectangle tiling in a rotated frame.

    Tile (i, j) occupies ``[u0 + i*w, u0 + (i+1)*w] x [v0 + j*h, v0 +
    (j+1)*h]`` in the frame rotated by ``theta``, where (u0, v0) is the
    rotated image of the grid anchor (the domain's lower-left corner).
    Only index ranges are stored, so grids with millions of tiles are
    cheap; tiles materialize on demand.
    """

    w: float
    h: float
    theta: float
    anchor: Tuple[float, float]
    i0: int
    i1: int  # exclusive
    j0: int
    j1: int  # exclusive
    domain: BBox = UNIT_SQUARE
    alpha: Optional[float] = None
    beta: Optional[int] = None
    keep: Optional[np.ndarray] = None  # bool mask (ni, nj); None = keep all

    @property
    def ni(self) -> int:
        return self.i1 - self.i0

    @property
    def nj(self) -> int:
        return self.j1 - self.j0

    def frame_origin(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, s], [-s, c]])  # world -> frame
        return rot @ np.asarray(self.anchor)

    def to_frame(self, points) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, s], [-s, c]])
        return np.atleast_2d(np.asarray(points, dtype=float)) @ rot.T

    def cell_of(self, points) -> np.ndarray:
        """Integer (i, j) grid cell of each point (half-open cells)."""
        f = self.to_frame(points) - self.frame_origin()
        ij = np.empty(f.shape, dtype=np.int64)
        ij[:, 0] = np.floor(f[:, 0] / self.w)
        ij[:, 1] = np.floor(f[:, 1] / self.h)
        return ij

    def tile(self, i: int, j: int) -> Parallelogram:
        u0, v0 = self.frame_origin()
        uc = u0 + (i + 0.5) * self.w
        vc = v0 + (j + 0.5) * self.h
        c, s = math.cos(self.theta), math.sin(self.theta)
        center = (c * uc - s * vc, s * uc + c * vc)
        return rotated_rectangle(center, self.w, self.h, self.theta,
                                 alpha=self.alpha, beta=self.beta)

    def kept_indices(self) -> np.ndarray:
        ii, jj = np.meshgrid(
            np.arange(self.i0, self.i1), np.arange(self.j0, self.j1), indexing="ij"
        )
        if self.keep is not None:
            ii, jj = ii[self.keep], jj[self.keep]
        else:
            ii, jj = ii.ravel(), jj.ravel()
        return np.column_stack([ii, jj])

    def centers(self) -> np.ndarray:
        idx = self.kept_indices()
        u0, v0 = self.frame_origin()
        uc = u0 + (idx[:, 0] + 0.5) * self.w
        vc = v0 + (idx[:, 1] + 0.5) * self.h
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.column_stack([c * uc - s * vc, s * uc + c * vc])

    def __len__(self) -> int:
        if self.keep is None:
            return self.ni * self.nj
        return int(np.count_nonzero(self.keep))

    def tiles(self) -> Iterable[Parallelogram]:
        for i, j in self.kept_indices():
            yield self.tile(int(i), int(j))

    def count_points(self, points) -> np.ndarray:
        """How many kept tiles contain each point (0 or 1 per grid)."""
        ij = self.cell_of(points)
        i, j = ij[:, 0], ij[:, 1]
        inside = (i >= self.i0) & (i < self.i1) & (j >= self.j0) & (j < self.j1)
        if self.keep is None:
            return inside.astype(np.int64)
        out = np.zeros(len(ij), dtype=np.int64)
        sel = np.flatnonzero(inside)
        out[sel] = self.keep[i[sel] - self.i0, j[sel] - self.j0]
        return out

    def domain_mask(self) -> np.ndarray:
        """Boolean (ni, nj): which cells meet the domain with positive area.

        Separating-axis test between each frame-aligned cell and the
        rotated image of the axis-aligned domain.
        """
        xmin, ymin, xmax, ymax = self.domain
        corners = np.array(
            [[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]], dtype=float
        )
        fc = self.to_frame(corners)  # rotated domain, convex quad in frame coords
        u0, v0 = self.frame_origin()
        iis = np.arange(self.i0, self.i1)
        jjs = np.arange(self.j0, self.j1)
        ulo = u0 + iis * self.w
        uhi = ulo + self.w
        vlo = v0 + jjs * self.h
        vhi = vlo + self.h
        # axis checks (frame axes)
        ok_u = (ulo[:, None] < fc[:, 0].max() - 1e-12) & (uhi[:, None] > fc[:, 0].min() + 1e-12)
        ok_v = (vlo[None, :] < fc[:, 1].max() - 1e-12) & (vhi[None, :] > fc[:, 1].min() + 1e-12)
        mask = ok_u & ok_v  # (ni, nj) via broadcasting of (ni,1) & (1,nj)
        # edge-normal checks of the quad
        for t in range(4):
            p, q = fc[t], fc[(t + 1) % 4]
            n = np.array([q[1] - p[1], p[0] - q[0]])  # outward or inward, fix sign below
            if np.dot(n, fc.mean(axis=0) - p) > 0:
                n = -n  # make n the outward normal
            c0 = np.dot(n, p)
            # min of n.x over cell corners; cell outside iff min > c0
            ui = np.where(n[0] < 0, uhi, ulo)
            vj = np.where(n[1] < 0, vhi, vlo)
            m = n[0] * ui[:, None] + n[1] * vj[None, :]
            mask &= m < c0 - 1e-12
        return mask


def make_tile_grid(
    w: float,
    h: float,
    theta: float,
    domain: BBox = UNIT_SQUARE,
    clip_to_domain: bool = True,
    alpha: Optional[float] = None,
    beta: Optional[int] = None,
) -> TileGrid:
    """Index ranges for the rotated grid covering the domain."""
    if w <= 0 or h <= 0:
        raise ValueError("tile sides must be positive")
    xmin, ymin, xmax, ymax = domain
    corners = np.array(
        [[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]], dtype=float
    )
    grid = TileGrid(w, h, float(theta), (xmin, ymin), 0, 0, 0, 0, domain, alpha, beta)
    fc = grid.to_frame(corners) - grid.frame_origin()
    pad = 1e-12
    i0 = int(math.floor((fc[:, 0].min() + pad) / w))
    i1 = int(math.ceil((fc[:, 0].max() - pad) / w))
    j0 = int(math.floor((fc[:, 1].min() + pad) / h))
    j1 = int(math.ceil((fc[:, 1].max() - pad) / h))
    grid.i0, grid.i1, grid.j0, grid.j1 = i0, max(i1, i0 + 1), j0, max(j1, j0 + 1)
    if clip_to_domain and abs(theta) % (math.pi / 2) > 1e-12:
        mask = grid.domain_mask()
        grid.keep = mask
    return grid


def tile_rotated_rectangles(
    w: float, h: float, theta: float, domain: BBox = UNIT_SQUARE
) -> List[Parallelogram]:
    """Congruent w x h rectangles, long-or-not side w along angle theta,
    on a grid anchored at the domain's lower-left corner.  The union of
    the returned tiles contains the domain; tiles overhanging the domain
    boundary are kept.
    """
    return list(make_tile_grid(w, h, theta, domain).tiles())


# -- convex polygon clipping -------------------------------------------


def _clip_halfplane(poly: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Keep the part of poly on the left of the directed edge p->q."""
    if len(poly) == 0:
        return poly
    d = q - p
    side = d[0] * (poly[:, 1] - p[1]) - d[1] * (poly[:, 0] - p[0])
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        sa, sb = side[i], side[(i + 1) % n]
        if sa >= 0:
            out.append(a)
        if (sa > 0 and sb < 0) or (sa < 0 and sb > 0):
            t = sa / (sa - sb)
            out.append(a + t * (b - a))
    return np.asarray(out) if out else np.empty((0, 2))


def _ccw_vertices(s: Parallelogram) -> np.ndarray:
    v = s.vertices()
    # vertices() walks the boundary; flip if clockwise
    area2 = 0.0
    for i in range(4):
        a, b = v[i], v[(i + 1) % 4]
        area2 += a[0] * b[1] - b[0] * a[1]
    return v if area2 > 0 else v[::-1]


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def intersection_area(s1: Parallelogram, s2: Parallelogram) -> float:
    """Area of the overlap, by clipping s1 against the edges of s2."""
    poly = _ccw_vertices(s1)
    clip = _ccw_vertices(s2)
    for i in range(4):
        poly = _clip_halfplane(poly, clip[i], clip[(i + 1) % 4])
        if len(poly) == 0:
            return 0.0
    return polygon_area(poly)
