"""Planar domains: unit square, unit disc and simple polygons."""

from dataclasses import dataclass, field

import numpy as np

KINDS = ("unit_square", "unit_disc", "polygon")

TRAPEZOID = ((0.0, 0.0), (1.0, 0.0), (0.7, 0.7), (0.3, 0.7))


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of Omega plus the finite-difference grid resolution.

    ``grid_n`` is the number of grid intervals along the longest side of the
    bounding box, so the spacing is ``h = extent / grid_n``.
    """

    kind: str
    vertices: tuple = field(default=())
    grid_n: int = 64

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.grid_n < 2:
            raise ValueError("grid_n must be at least 2")
        verts = tuple(tuple(float(c) for c in v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if self.kind == "polygon":
            if len(verts) < 3:
                raise ValueError("a polygon needs at least 3 vertices")
            if not polygon_is_simple(np.array(verts)):
                raise ValueError("polygon is self-intersecting")
        elif verts:
            raise ValueError(f"{self.kind} takes no vertices")

    @classmethod
    def square(cls, grid_n=64):
        return cls("unit_square", (), grid_n)

    @classmethod
    def disc(cls, grid_n=64):
        return cls("unit_disc", (), grid_n)

    @classmethod
    def trapezoid(cls, grid_n=64):
        return cls("polygon", TRAPEZOID, grid_n)

    def to_dict(self):
        return {"kind": self.kind, "vertices": [list(v) for v in self.vertices], "grid_n": self.grid_n}

    @property
    def bbox(self):
        """(xmin, xmax, ymin, ymax)."""
        if self.kind == "unit_square":
            return (0.0, 1.0, 0.0, 1.0)
        if self.kind == "unit_disc":
            return (-1.0, 1.0, -1.0, 1.0)
        v = np.array(self.vertices)
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())

    @property
    def area(self):
        if self.kind == "unit_square":
            return 1.0
        if self.kind == "unit_disc":
            return np.pi
        v = np.array(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    @property
    def is_convex(self):
        if self.kind != "polygon":
            return True
        v = np.array(self.vertices)
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        return bool(np.all(cross >= -1e-14) or np.all(cross <= 1e-14))

    def contains(self, x, y, strict=True):
        """Membership mask of the points (x, y) in Omega (open set if strict)."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.kind == "unit_square":
            if strict:
                return (x > 0) & (x < 1) & (y > 0) & (y < 1)
            return (x >= 0) & (x <= 1) & (y >= 0) & (y <= 1)
        if self.kind == "unit_disc":
            r2 = x * x + y * y
            return r2 < 1.0 if strict else r2 <= 1.0 + 1e-14
        inside = points_in_polygon(np.array(self.vertices), x, y)
        if strict:
            inside &= polygon_boundary_distance(np.array(self.vertices), x, y) > 1e-12
        return inside

    def grid(self, n=None):
        """Nodes of the uniform grid: (xs, ys, h).  Square cells of side h."""
        n = self.grid_n if n is None else n
        x0, x1, y0, y1 = self.bbox
        h = max(x1 - x0, y1 - y0) / n
        nx = int(round((x1 - x0) / h))
        ny = int(round((y1 - y0) / h))
        return x0 + h * np.arange(nx + 1), y0 + h * np.arange(ny + 1), h


def points_in_polygon(verts, x, y):
    """Even-odd rule, vectorised over the query points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    n = len(verts)
    for i in range(n):
        xa, ya = verts[i]
        xb, yb = verts[(i + 1) % n]
        crosses = (ya > y) != (yb > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = xa + (y - ya) * (xb - xa) / (yb - ya)
        inside ^= crosses & (x < xint)
    return inside


def polygon_boundary_distance(verts, x, y):
    """Euclidean distance from each point to the polygon boundary."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    d = np.full(np.broadcast(x, y).shape, np.inf)
    n = len(verts)
    for i in range(n):
        d = np.minimum(d, segment_distance(verts[i], verts[(i + 1) % n], x, y))
    return d


def segment_distance(a, b, x, y):
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay
    t = ((x - ax) * ex + (y - ay) * ey) / (ex * ex + ey * ey)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(x - (ax + t * ex), y - (ay + t * ey))


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    return orient(p1, p2, q1) * orient(p1, p2, q2) < 0 and orient(q1, q2, p1) * orient(q1, q2, p2) < 0


def polygon_is_simple(verts):
    n = len(verts)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(i - j) <= 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(verts[i], verts[(i + 1) % n], verts[j], verts[(j + 1) % n]):
                return False
    return True
