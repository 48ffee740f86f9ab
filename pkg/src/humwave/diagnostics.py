"""Reconstruction errors, input states, field sampling and ray geometry."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .mt_operator import HState, hnorm
from .spectral_basis import ScalarField

# ---------------------------------------------------------------- reconstruction


@dataclass(frozen=True)
class ReconstructionReport:
    E: float
    profile_u0: np.ndarray
    profile_u1: np.ndarray
    omegas: np.ndarray
    cutoff: float
    cutoff_big: float


def reconstruct(w, system):
    """y = M_big w_hat with w_hat the zero padding of w into the system's basis."""
    if w.n > len(system):
        raise ValueError("verification basis must contain the control basis")
    return system.apply(w.embed(system.omegas))


def reconstruction_error(u, y):
    """E = ||u - y||_H / ||u||_H."""
    if u.n != y.n:
        raise ValueError("states must share the verification basis")
    nu = hnorm(u)
    if nu == 0:
        raise ValueError("reference state has zero norm")
    return float(np.linalg.norm(u.c - y.c) / nu)


def spectral_error_profile(u, y):
    """Per-mode |U_n - Y_n| / ||u||_H for the u0 and u1 halves."""
    nu = hnorm(u)
    if nu == 0:
        raise ValueError("reference state has zero norm")
    d = np.abs(u.c - y.c) / nu
    return d[: u.n], d[u.n:]


def reconstruction_report(u, y, cutoff):
    p0, p1 = spectral_error_profile(u, y)
    return ReconstructionReport(reconstruction_error(u, y), p0, p1, u.omegas, float(cutoff),
                                float(u.omegas[-1]))


# ---------------------------------------------------------------- input data


def one_mode_state(basis, n, size=None):
    """(e_n, 0) in the first ``size`` modes."""
    om = basis.omegas[: size or len(basis)]
    return HState.one_mode(om, n)


def dirac_state(basis, point, n_i, size=None):
    """u0 = sum_{n <= n_i} e_n(point) e_n, u1 = 0."""
    size = size or len(basis)
    if not 1 <= n_i <= size <= len(basis):
        raise ValueError("need 1 <= n_i <= size <= basis size")
    vals = basis.evaluate([point[0]], [point[1]], np.arange(n_i))[0]
    u0 = np.zeros(size)
    u0[:n_i] = vals
    return HState.from_fields(basis.omegas[:size], u0=u0)


def rotated_box(rect, angle):
    """Vertices of rectangle (x0, x1, y0, y1) rotated about its centre."""
    x0, x1, y0, y1 = rect
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    c, s = math.cos(angle), math.sin(angle)
    pts = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return tuple((cx + c * (x - cx) - s * (y - cy), cy + s * (x - cx) + c * (y - cy)) for x, y in pts)


def box_state(basis, box, n_i, size=None, resolution=1024):
    """u0 = projection of a box indicator on the first n_i modes, u1 = 0.

    ``box`` is an axis-aligned rectangle (x0, x1, y0, y1) or a polygon (list
    of vertices). Axis-aligned boxes on the square use exact sine integrals;
    everything else uses the midpoint rule on ``resolution`` cells per side.
    """
    from .domains import points_in_polygon

    size = size or len(basis)
    if not 1 <= n_i <= size <= len(basis):
        raise ValueError("need 1 <= n_i <= size <= basis size")
    u0 = np.zeros(size)
    idx = np.arange(n_i)
    rect = len(box) == 4 and np.isscalar(box[0])
    if rect and basis.kind == "square":
        x0, x1, y0, y1 = box
        lab = np.array(basis.labels[:n_i])
        k, l = lab[:, 0] * np.pi, lab[:, 1] * np.pi
        ix = (np.cos(k * x0) - np.cos(k * x1)) / k
        iy = (np.cos(l * y0) - np.cos(l * y1)) / l
        u0[:n_i] = 2.0 * ix * iy
    else:
        verts = np.array([(box[0], box[2]), (box[1], box[2]), (box[1], box[3]), (box[0], box[3])]
                         if rect else box, float)
        xa, xb = verts[:, 0].min(), verts[:, 0].max()
        ya, yb = verts[:, 1].min(), verts[:, 1].max()
        bx0, bx1, by0, by1 = basis.domain.bbox
        h = max(bx1 - bx0, by1 - by0) / resolution
        xs = np.arange(math.floor(xa / h), math.ceil(xb / h)) * h + h / 2
        ys = np.arange(math.floor(ya / h), math.ceil(yb / h)) * h + h / 2
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        X, Y = X.ravel(), Y.ravel()
        keep = points_in_polygon(verts, X, Y) & basis.domain.contains(X, Y)
        X, Y = X[keep], Y[keep]
        for s in range(0, X.size, 20000):
            u0[:n_i] += basis.evaluate(X[s:s + 20000], Y[s:s + 20000], idx).sum(axis=0) * h * h
    return HState.from_fields(basis.omegas[:size], u0=u0)


# ---------------------------------------------------------------- fields


def render_field(state, basis, which="u0", n=128):
    """Sample u0 (sum c_j / omega_j e_j) or u1 (sum c_{N+j} e_j) on an (n+1)^2 grid."""
    if which not in ("u0", "u1"):
        raise ValueError("which must be 'u0' or 'u1'")
    coef = state.u0 if which == "u0" else state.u1
    xs, ys, _ = basis.domain.grid(n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nz = np.flatnonzero(coef)
    vals = np.zeros(X.size)
    for s in range(0, X.size, 20000):
        if nz.size:
            E = basis.evaluate(X.ravel()[s:s + 20000], Y.ravel()[s:s + 20000], nz)
            vals[s:s + 20000] = E @ coef[nz]
    return ScalarField(xs, ys, vals.reshape(X.shape), basis.domain.contains(X, Y, strict=False))


def contour_levels(field, count=10):
    """Evenly spaced levels over the field range with the area fraction above each."""
    v = field.values[field.mask]
    lo, hi = float(v.min()), float(v.max())
    levels = np.linspace(lo, hi, count + 2)[1:-1]
    return [(float(c), float(np.mean(v > c))) for c in levels]


def grid_to_basis(values, grid, basis):
    """L2 coefficients <g, e_k> of a nodal grid function via the nodal rule h^2 sum."""
    full = grid.to_full(values)
    if basis.kind == "square":
        lab = np.array(basis.labels)
        kmax = int(lab.max())
        ks = np.arange(1, kmax + 1)
        Sx = np.sqrt(2.0) * np.sin(np.pi * np.outer(ks, grid.xs))
        Sy = np.sqrt(2.0) * np.sin(np.pi * np.outer(ks, grid.ys))
        A = Sx @ full @ Sy.T
        return grid.h ** 2 * A[lab[:, 0] - 1, lab[:, 1] - 1]
    X, Y = grid.nodes()
    out = np.zeros(len(basis))
    for s in range(0, X.size, 20000):
        out += basis.evaluate(X[s:s + 20000], Y[s:s + 20000]).T @ values[s:s + 20000]
    return grid.h ** 2 * out


def project_state(state, source, target):
    """Carry an HState from one basis to another through the grid of the FD side."""
    grid = source.grid if source.kind == "fd" else target.grid
    if grid is None:
        raise ValueError("one of the two bases must be a finite-difference basis")
    if source.kind == "fd":
        g0 = source.vectors[:, : state.n] @ state.u0
        g1 = source.vectors[:, : state.n] @ state.u1
        u0, u1 = grid_to_basis(g0, grid, target), grid_to_basis(g1, grid, target)
    else:
        X, Y = grid.nodes()
        E = source.evaluate(X, Y, np.arange(state.n))
        V = target.vectors * grid.h ** 2
        u0, u1 = V.T @ (E @ state.u0), V.T @ (E @ state.u1)
    return HState.from_fields(target.omegas, u0=u0, u1=u1)


# ---------------------------------------------------------------- rays


@dataclass(frozen=True)
class RayPath:
    start: tuple
    direction: tuple
    points: np.ndarray
    length: float
    terminated: bool = False


def _polygon_vertices(domain):
    if domain.kind == "unit_square":
        return np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    return np.array(domain.vertices, float)


def trace_ray(domain, start, direction, length, vertex_tol=1e-9):
    """Billiard path of a given length with specular reflections.

    Rays that hit a polygon vertex stop there (``terminated``).
    """
    d = np.asarray(direction, float)
    nd = np.linalg.norm(d)
    if not np.isfinite(nd) or nd < 1e-12:
        raise ValueError("degenerate ray direction")
    d = d / nd
    p = np.asarray(start, float)
    if not domain.contains(p[0], p[1], strict=False):
        raise ValueError("ray must start inside the domain")
    pts = [p.copy()]
    remaining = float(length)
    travelled = 0.0
    terminated = False
    verts = None if domain.kind == "unit_disc" else _polygon_vertices(domain)
    while remaining > 0:
        if verts is None:
            pd = p @ d
            t = -pd + math.sqrt(max(pd * pd - (p @ p - 1.0), 0.0))
            normal = None
        else:
            t, normal, at_vertex = _polygon_hit(verts, p, d, vertex_tol)
        if t >= remaining:
            p = p + remaining * d
            travelled += remaining
            pts.append(p)
            break
        p = p + t * d
        travelled += t
        remaining -= t
        pts.append(p.copy())
        if verts is None:
            normal = p / np.linalg.norm(p)
            p = p / np.linalg.norm(p)
        elif at_vertex:
            terminated = True
            break
        d = d - 2.0 * (d @ normal) * normal
        d /= np.linalg.norm(d)
    return RayPath(tuple(np.asarray(start, float)), tuple(np.asarray(direction, float) / nd),
                   np.array(pts), travelled, terminated)


def _polygon_hit(verts, p, d, vertex_tol):
    a = verts
    b = np.roll(verts, -1, axis=0)
    e = b - a
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    ap = a - p
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = (ap[:, 0] * e[:, 1] - ap[:, 1] * e[:, 0]) / denom
        s = (ap[:, 0] * d[1] - ap[:, 1] * d[0]) / denom
    ok = (np.abs(denom) > 1e-15) & (t > 1e-12) & (s >= -1e-12) & (s <= 1 + 1e-12)
    if not np.any(ok):
        raise RuntimeError("ray escaped the polygon")
    t = np.where(ok, t, np.inf)
    i = int(np.argmin(t))
    hit = p + t[i] * d
    at_vertex = bool(np.min(np.hypot(*(verts - hit).T)) < vertex_tol)
    n = np.array([-e[i, 1], e[i, 0]])
    n /= np.linalg.norm(n)
    return float(t[i]), n, at_vertex


def first_entry_time(path, region, step=None):
    """Arclength at which the path first enters U (inf if it never does)."""
    step = step or max(1e-3, region.width / 16 if region.kind != "whole" else 1.0)
    t0 = 0.0
    for a, b in zip(path.points[:-1], path.points[1:]):
        seg = float(np.linalg.norm(b - a))
        n = max(2, int(math.ceil(seg / step)) + 1)
        s = np.linspace(0.0, 1.0, n)
        xs = a[0] + s * (b[0] - a[0])
        ys = a[1] + s * (b[1] - a[1])
        inside = region.contains(xs, ys)
        if np.any(inside):
            return t0 + seg * s[int(np.argmax(inside))]
        t0 += seg
    return math.inf


@dataclass(frozen=True)
class GCCSample:
    T: float
    fraction: float
    rays: int
    worst_start: tuple
    worst_direction: tuple
    worst_entry: float
    gcc_time: float


def gcc_sample(domain, region, T, density=16, seed=0, horizon=None):
    """Sampled check of the geometric control condition at time T.

    Start points are cell centres of a density^2 grid over the bounding box
    (kept if inside the domain); directions are 2*density uniform angles with
    a seeded global offset. ``gcc_time`` is the largest first-entry time among
    the sampled rays traced up to ``horizon`` (inf if some ray never enters).
    """
    if density < 10:
        raise ValueError("sample density must be at least 10 per phase-space dimension")
    horizon = max(T, horizon or T)
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = domain.bbox
    xs = x0 + (x1 - x0) * (np.arange(density) + 0.5) / density
    ys = y0 + (y1 - y0) * (np.arange(density) + 0.5) / density
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    keep = domain.contains(X, Y)
    starts = np.column_stack([X[keep], Y[keep]])
    angles = 2 * np.pi * (np.arange(2 * density) + rng.uniform()) / (2 * density)
    entries = []
    for p in starts:
        for th in angles:
            d = (math.cos(th), math.sin(th))
            if region.contains(p[0], p[1]):
                entries.append((0.0, p, d))
                continue
            path = trace_ray(domain, p, d, horizon)
            entries.append((first_entry_time(path, region), p, d))
    times = np.array([e[0] for e in entries])
    worst = int(np.argmax(times))
    frac = float(np.mean(times <= T))
    return GCCSample(T, frac, len(entries), tuple(entries[worst][1]), entries[worst][2],
                     float(times[worst]), float(times.max()))


def uniqueness_time(domain, region, n=200):
    """T_u = 2 sup_x dist_Omega(x, U) on an (n+1)^2 grid.

    Straight-line distances on convex domains, 8-neighbour graph distances
    otherwise.
    """
    if region.kind == "whole":
        return 0.0
    xs, ys, h = domain.grid(n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = domain.contains(X, Y, strict=False)
    if domain.is_convex:
        return 2.0 * float(region.distance(X[inside], Y[inside]).max())
    idx = -np.ones(X.shape, int)
    idx[inside] = np.arange(inside.sum())
    rows, cols, wts = [], [], []
    nx, ny = X.shape
    for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
        i0, i1 = 0, nx - di
        j0, j1 = max(0, -dj), ny - max(0, dj)
        a = idx[i0:i1, j0:j1]
        b = idx[i0 + di:i1 + di, j0 + dj:j1 + dj]
        ok = (a >= 0) & (b >= 0)
        rows.append(a[ok])
        cols.append(b[ok])
        wts.append(np.full(int(ok.sum()), h * math.hypot(di, dj)))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(wts)
    m = inside.sum()
    graph = coo_matrix((w, (r, c)), shape=(m, m)).tocsr()
    src = np.flatnonzero(region.contains(X[inside], Y[inside]))
    if src.size == 0:
        return math.inf
    dist = dijkstra(graph, directed=False, indices=src, min_only=True)
    return 2.0 * float(dist.max())
