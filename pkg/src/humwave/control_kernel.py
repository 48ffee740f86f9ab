"""Control window chi(t, x) = psi(t) chi0(x), spatial Gram matrix and time kernels.

The spatial weight is built from "depths": the distance from a point of U to
the inner edge of each elementary piece of U (a side strip of the square, the
strip around a disc radius, the base strip of a polygon, a truncation circle).
In the smooth mode each depth ``s`` is mapped through the quadratic ramp
``q(s) = 1 - (1 - s/a)**2`` on ``0 < s < a`` (``q = 1`` beyond ``a``); union
pieces combine as ``1 - prod(1 - q)``, intersection pieces as ``prod(q)``.
On the square with ``a`` equal to the strip width this is exactly
``1 - (x/a)**2`` next to the controlled side.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.spatial import cKDTree

SQUARE_SIDES = ("left", "right", "bottom", "top")
REGION_KINDS = ("whole", "square_sides", "disc_radius_strip", "polygon_base_strip")


@dataclass(frozen=True)
class ControlRegion:
    """Open control set U.

    kind
        ``whole`` (U = Omega), ``square_sides`` (union of strips along the
        listed sides of the unit square), ``disc_radius_strip`` (points within
        ``width/2`` of the radius [0, 1] x {0}, optionally truncated: ``inner``
        removes r < r_cut, ``outer`` removes r > r_cut), ``polygon_base_strip``
        (points of the polygon within ``width`` of the line through its first
        edge).
    """

    kind: str
    width: float = 0.2
    sides: tuple = ("left", "top")
    trunc: str = "none"
    r_cut: float = 0.5
    vertices: tuple = ()

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind != "whole" and not 0.0 < self.width < 1.0:
            raise ValueError("width must lie in (0, 1)")
        if self.kind == "square_sides":
            if not self.sides or any(s not in SQUARE_SIDES for s in self.sides):
                raise ValueError(f"sides must be drawn from {SQUARE_SIDES}")
            object.__setattr__(self, "sides", tuple(self.sides))
        if self.trunc not in ("none", "inner", "outer"):
            raise ValueError("trunc must be none, inner or outer")
        if self.kind == "polygon_base_strip" and len(self.vertices) < 3:
            raise ValueError("polygon_base_strip needs the polygon vertices")
        object.__setattr__(self, "vertices", tuple(tuple(map(float, v)) for v in self.vertices))

    @classmethod
    def square_two_sides(cls, width):
        return cls("square_sides", width, ("left", "top"))

    @classmethod
    def disc_strip(cls, width, trunc="none", r_cut=0.5):
        return cls("disc_radius_strip", width, trunc=trunc, r_cut=r_cut)

    @classmethod
    def polygon_base(cls, vertices, width):
        return cls("polygon_base_strip", width, vertices=tuple(vertices))

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind != "whole":
            d["width"] = self.width
        if self.kind == "square_sides":
            d["sides"] = list(self.sides)
        if self.kind == "disc_radius_strip":
            d["trunc"] = self.trunc
            d["r_cut"] = self.r_cut
        if self.kind == "polygon_base_strip":
            d["vertices"] = [list(v) for v in self.vertices]
        return d

    @property
    def default_ramp(self):
        """Ramp width matching the full depth of one strip."""
        return self.width / 2 if self.kind == "disc_radius_strip" else self.width

    def pieces(self, x, y):
        """Depths of (x, y) in the elementary pieces, plus the combination rule."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.kind == "whole":
            return [np.full(np.broadcast(x, y).shape, np.inf)], "union"
        if self.kind == "square_sides":
            w = self.width
            depth = {"left": w - x, "right": x - (1 - w), "bottom": w - y, "top": y - (1 - w)}
            return [depth[s] for s in self.sides], "union"
        if self.kind == "disc_radius_strip":
            dseg = np.where(x >= 0, np.abs(y), np.hypot(x, y))
            out = [self.width / 2 - np.minimum(dseg, np.hypot(x - 1, y))]
            r = np.hypot(x, y)
            if self.trunc == "inner":
                out.append(r - self.r_cut)
            elif self.trunc == "outer":
                out.append(self.r_cut - r)
            return out, "intersection"
        (ax, ay), (bx, by) = self.vertices[0], self.vertices[1]
        nx, ny = -(by - ay), bx - ax
        nrm = math.hypot(nx, ny)
        # inward normal for a counter-clockwise polygon
        dist = ((x - ax) * nx + (y - ay) * ny) / nrm
        return [self.width - dist], "intersection"

    def contains(self, x, y):
        ds, rule = self.pieces(x, y)
        inside = [d > 0 for d in ds]
        return np.logical_or.reduce(inside) if rule == "union" else np.logical_and.reduce(inside)

    def distance(self, x, y, resolution=400):
        """Euclidean distance from (x, y) to U."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.kind == "whole":
            return np.zeros(np.broadcast(x, y).shape)
        if self.kind == "square_sides":
            ds, _ = self.pieces(x, y)
            return np.min([np.maximum(0.0, -d) for d in ds], axis=0)
        if self.kind == "polygon_base_strip":
            return np.maximum(0.0, -self.pieces(x, y)[0][0])
        # truncated strips: nearest sampled point of U
        g = np.linspace(-1, 1, 2 * resolution + 1)
        X, Y = np.meshgrid(g, g, indexing="ij")
        keep = self.contains(X, Y) & (X ** 2 + Y ** 2 < 1)
        tree = cKDTree(np.column_stack([X[keep], Y[keep]]))
        d, _ = tree.query(np.column_stack([x.ravel(), y.ravel()]))
        d = d.reshape(np.broadcast(x, y).shape)
        return np.where(self.contains(x, y), 0.0, d)


def ramp(s, a):
    """Quadratic ramp: 0 for s <= 0, 1 - (1 - s/a)^2 on (0, a), 1 beyond."""
    t = np.clip(np.asarray(s, float) / a, 0.0, 1.0)
    return 1.0 - (1.0 - t) ** 2


@dataclass(frozen=True)
class SpaceWeight:
    region: ControlRegion
    smooth: bool = False
    ramp_width: Optional[float] = None

    def __post_init__(self):
        if self.smooth and self.ramp_width is None:
            object.__setattr__(self, "ramp_width", self.region.default_ramp)
        if self.smooth and not self.ramp_width > 0:
            raise ValueError("ramp width must be positive")

    def to_dict(self):
        return {"region": self.region.to_dict(), "smooth": self.smooth,
                "ramp_width": self.ramp_width if self.smooth else None}

    def __call__(self, x, y):
        return chi0_eval(self, x, y)


@dataclass(frozen=True)
class TimeWeight:
    T: float
    smooth: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("control time must be positive")

    def to_dict(self):
        return {"T": self.T, "smooth": self.smooth}

    @property
    def psi2_integral(self):
        """int_0^T psi^2 dt."""
        return 8.0 * self.T / 15.0 if self.smooth else self.T

    def __call__(self, t):
        return psi_eval(self, t)


def chi0_eval(weight, x, y):
    """Spatial weight chi0 at points; exactly 0 outside U, values in [0, 1]."""
    ds, rule = weight.region.pieces(x, y)
    if weight.smooth:
        qs = [ramp(d, weight.ramp_width) for d in ds]
    else:
        qs = [(d > 0).astype(float) for d in ds]
    if rule == "union":
        val = 1.0 - np.prod([1.0 - q for q in qs], axis=0)
    else:
        val = np.prod(qs, axis=0)
    return val


def psi_eval(weight, t):
    """Time weight: 1 on [0, T], or 4 t (T - t) / T^2 in the smooth mode."""
    t = np.asarray(t, float)
    inside = (t >= 0) & (t <= weight.T)
    if weight.smooth:
        val = 4.0 * t * (weight.T - t) / weight.T ** 2
    else:
        val = np.ones_like(t)
    return np.where(inside, val, 0.0)


# --------------------------------------------------------------------------
# time kernels

@dataclass(frozen=True)
class TimeKernels:
    """a, b, c, d with rows indexed by n and columns by m.

    a = int psi^2 sin(w_n s) sin(w_m s),  b = int psi^2 cos(w_n s) sin(w_m s),
    c = int psi^2 sin(w_n s) cos(w_m s),  d = int psi^2 cos(w_n s) cos(w_m s).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray


SERIES_SWITCH = 1.0


def _moments(theta, pmax):
    """C_p = int_0^1 u^p cos(theta u) du and S_p (sin), p = 0..pmax."""
    th = np.asarray(theta, float)
    C = np.empty((pmax + 1,) + th.shape)
    S = np.empty_like(C)
    small = np.abs(th) < SERIES_SWITCH
    t = np.where(small, 1.0, th)
    sin_t, cos_t = np.sin(t), np.cos(t)
    C[0] = sin_t / t
    S[0] = 2.0 * np.sin(0.5 * t) ** 2 / t
    for p in range(1, pmax + 1):
        C[p] = sin_t / t - (p / t) * S[p - 1]
        S[p] = -cos_t / t + (p / t) * C[p - 1]
    if np.any(small):
        ts = th[small]
        t2 = ts * ts
        for p in range(pmax + 1):
            c = np.zeros_like(ts)
            s = np.zeros_like(ts)
            term = np.ones_like(ts)  # theta^(2k) / (2k)!
            for k in range(12):
                c += term / (p + 2 * k + 1)
                term_s = term * ts / (2 * k + 1)
                s += term_s / (p + 2 * k + 2)
                term = -term * t2 / ((2 * k + 1) * (2 * k + 2))
            C[p][small] = c
            S[p][small] = s
    return C, S


def _psi2_trig(weight, freq):
    """(int_0^T psi^2 cos(f s) ds, int_0^T psi^2 sin(f s) ds) elementwise in f."""
    T = weight.T
    C, S = _moments(np.asarray(freq) * T, 4 if weight.smooth else 0)
    if weight.smooth:
        return 16.0 * T * (C[2] - 2 * C[3] + C[4]), 16.0 * T * (S[2] - 2 * S[3] + S[4])
    return T * C[0], T * S[0]


def time_kernels(weight, omegas, omegas_cols=None):
    """Closed-form time integrals for all (row, column) frequency pairs."""
    wn = np.asarray(omegas, float)[:, None]
    square = omegas_cols is None
    wm = (wn.T if square else np.asarray(omegas_cols, float)[None, :])
    cd, sd = _psi2_trig(weight, wn - wm)
    cs, ss = _psi2_trig(weight, wn + wm)
    a = 0.5 * (cd - cs)
    d = 0.5 * (cd + cs)
    b = 0.5 * (ss - sd)
    c = b.T.copy() if square else 0.5 * (ss + sd)
    if square:
        a = 0.5 * (a + a.T)
        d = 0.5 * (d + d.T)
    return TimeKernels(a, b, c, d)


def quadrature_oracle(f, lo, hi, max_freq=0.0, tol=1e-12):
    """Adaptive Gauss-Kronrod integral of a smooth 1D integrand.

    The interval is cut into pieces of about two periods of ``max_freq`` so
    each adaptive call sees a mildly oscillatory integrand.
    """
    pieces = max(1, int(np.ceil((hi - lo) * max_freq / (4 * np.pi))))
    edges = np.linspace(lo, hi, pieces + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(f, a, b, epsabs=tol / pieces, epsrel=tol, limit=200)
        if err > 100 * tol:
            raise RuntimeError(f"quadrature failed to converge on [{a}, {b}] (error {err:.2e})")
        total += val
    return total


# --------------------------------------------------------------------------
# Gram matrices

@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    method: str
    resolution: int = 0


def gram_matrix(basis, weight, method="auto", q=4):
    """G[n, m] = int chi0^2 e_n e_m over Omega.

    method
        ``auto`` picks ``exact`` (separable Gauss-Legendre) for the square
        with side strips, ``polar`` (piecewise Gauss-Legendre in r, theta)
        for the disc, ``nodal`` for FD bases, ``grid`` (midpoint rule at
        ``q * grid_n`` cells per side) otherwise.
    """
    region = weight.region
    if method == "auto":
        if basis.kind == "fd":
            method = "nodal"
        elif basis.kind == "square" and region.kind in ("whole", "square_sides"):
            method = "exact"
        elif basis.kind == "disc" and region.kind in ("whole", "disc_radius_strip"):
            method = "polar"
        else:
            method = "grid"
    if method == "exact":
        G = _gram_square_exact(basis, weight)
        res = 0
    elif method == "polar":
        G = _gram_disc_polar(basis, weight)
        res = 0
    elif method == "nodal":
        G, res = _gram_nodal(basis, weight), basis.grid.shape[0] - 1
    elif method == "grid":
        res = q * basis.domain.grid_n
        G = _gram_grid(basis, weight, res)
    else:
        raise ValueError(f"unknown Gram method {method!r}")
    G = 0.5 * (G + G.T)
    return GramMatrix(G, method, res)


def _gl(lo, hi, n):
    x, w = leggauss(n)
    return lo + (hi - lo) * (x + 1) / 2, w * (hi - lo) / 2


def _sine_gram(kmax, pieces, func):
    """A[k, k'] = int func(x) sqrt2 sin(k pi x) sqrt2 sin(k' pi x) dx over the pieces."""
    A = np.zeros((kmax, kmax))
    ks = np.arange(1, kmax + 1)
    for lo, hi in pieces:
        if hi <= lo:
            continue
        n = int(2 * kmax * (hi - lo) + 48)
        x, w = _gl(lo, hi, n)
        S = np.sqrt(2.0) * np.sin(np.pi * np.outer(ks, x))
        A += (S * (w * func(x))) @ S.T
    return A


def _gram_square_exact(basis, weight):
    region = weight.region
    lab = np.array(basis.labels)
    k, l = lab[:, 0], lab[:, 1]
    kmax = int(max(k.max(), l.max()))
    n = len(basis)
    if region.kind == "whole":
        return np.eye(n)
    w = region.width
    a = weight.ramp_width if weight.smooth else None

    def profile(axis_sides, lo_side, hi_side):
        # F(t) = prod over sides on this axis of (1 - q(depth))
        def depth(side, t):
            return w - t if side == lo_side else t - (1 - w)

        def F(t):
            out = np.ones_like(t)
            for s in axis_sides:
                d = depth(s, t)
                out = out * (1.0 - (ramp(d, a) if a else (d > 0).astype(float)))
            return out

        cuts = {0.0, 1.0}
        for s in axis_sides:
            edge = w if s == lo_side else 1 - w
            cuts.add(edge)
            if a:
                cuts.add(w - a if s == lo_side else 1 - w + a)
        cuts = sorted(c for c in cuts if 0.0 <= c <= 1.0)
        return F, list(zip(cuts[:-1], cuts[1:]))

    xs_sides = [s for s in region.sides if s in ("left", "right")]
    ys_sides = [s for s in region.sides if s in ("bottom", "top")]
    Fx, px = profile(xs_sides, "left", "right")
    Fy, py = profile(ys_sides, "bottom", "top")
    A1 = _sine_gram(kmax, px, Fx)
    A2 = _sine_gram(kmax, px, lambda t: Fx(t) ** 2)
    B1 = _sine_gram(kmax, py, Fy)
    B2 = _sine_gram(kmax, py, lambda t: Fy(t) ** 2)
    ix = np.ix_(k - 1, k - 1)
    iy = np.ix_(l - 1, l - 1)
    # chi0^2 = 1 - 2 F(x) F(y) + F(x)^2 F(y)^2
    G = A2[ix] * B2[iy] - 2.0 * A1[ix] * B1[iy]
    G[np.diag_indices(n)] += 1.0
    return G


def _gram_disc_polar(basis, weight):
    region = weight.region
    n = len(basis)
    m_all = np.array([lab[0] for lab in basis.labels])
    mmax = int(m_all.max())
    labels = sorted({(lab[0], lab[2]) for lab in basis.labels})
    lab_index = {lab: i for i, lab in enumerate(labels)}
    col = np.array([lab_index[(lab[0], lab[2])] for lab in basis.labels])
    lm = np.array([lab[0] for lab in labels])
    lp = np.array([lab[1] for lab in labels])
    wmax = float(basis.omegas.max())

    a = weight.ramp_width if weight.smooth else 0.0
    hw = region.width / 2 if region.kind == "disc_radius_strip" else 2.0
    # levels c of |y| (x > 0) where chi0 changes formula; theta cut = asin(c / r)
    levels = [c for c in (hw, hw - a) if 0.0 < c < 1.0] if region.kind != "whole" else []
    rcuts = {0.0, 1.0, *levels}
    if region.kind == "disc_radius_strip" and region.trunc != "none":
        rcuts.update({region.r_cut, region.r_cut + (a if region.trunc == "inner" else -a)})
    rcuts = sorted(c for c in rcuts if 0.0 <= c <= 1.0)

    G = np.zeros((n, n))
    for r_lo, r_hi in zip(rcuts[:-1], rcuts[1:]):
        if r_hi - r_lo < 1e-14:
            continue
        if r_lo in levels:
            # r = c / sin(phi) removes the square-root behaviour of asin(c / r) at r = c
            c = r_lo
            phi, wphi = _gl(math.asin(c / r_hi), math.pi / 2, int(1.5 * wmax * (r_hi - r_lo)) + 40)
            r = c / np.sin(phi)
            wr = wphi * c * np.cos(phi) / np.sin(phi) ** 2
        else:
            r, wr = _gl(r_lo, r_hi, int(wmax * (r_hi - r_lo)) + 30)
        rad, _ = basis.radial_angular(r, np.zeros(1))
        for ir in range(r.size):
            ang_w = _angular_gram(weight, r[ir], levels, lm, lp, mmax)
            if not np.any(ang_w):
                continue
            Rr = rad[ir]
            G += (wr[ir] * r[ir]) * np.outer(Rr, Rr) * ang_w[np.ix_(col, col)]
    return G


def _angular_gram(weight, r, levels, lm, lp, mmax):
    """int_0^{2 pi} chi0(r, theta)^2 Theta_i Theta_j dtheta over angular labels."""
    cuts = {-math.pi / 2, math.pi / 2, 3 * math.pi / 2}
    for c in levels:
        if c < r:
            t = math.asin(c / r)
            cuts.update({t, -t})
    cuts = sorted(cuts)
    thetas, wts = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        t, w = _gl(lo, hi, int(mmax * (hi - lo)) + 24)
        thetas.append(t)
        wts.append(w)
    th = np.concatenate(thetas)
    w = np.concatenate(wts) * chi0_eval(weight, r * np.cos(th), r * np.sin(th)) ** 2
    if not np.any(w):
        return np.zeros((lm.size, lm.size))
    ang = np.where(lp[None, :] == 0, np.cos(np.outer(th, lm)), np.sin(np.outer(th, lm)))
    return (ang * w[:, None]).T @ ang


def _check_resolution(h, omega_max):
    # four samples per wavelength of the highest mode
    if h * omega_max > np.pi / 2:
        raise ValueError(
            f"quadrature spacing {h:.4g} under-resolves frequency {omega_max:.4g}; "
            f"need h <= {np.pi / (2 * omega_max):.4g}")


def _gram_grid(basis, weight, cells, chunk=20000):
    x0, x1, y0, y1 = basis.domain.bbox
    h = max(x1 - x0, y1 - y0) / cells
    _check_resolution(h, basis.cutoff)
    xc = x0 + h * (np.arange(int(round((x1 - x0) / h))) + 0.5)
    yc = y0 + h * (np.arange(int(round((y1 - y0) / h))) + 0.5)
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    X, Y = X.ravel(), Y.ravel()
    wts = chi0_eval(weight, X, Y) ** 2 * basis.domain.contains(X, Y, strict=True)
    keep = wts > 0
    X, Y, wts = X[keep], Y[keep], wts[keep] * h * h
    n = len(basis)
    G = np.zeros((n, n))
    for s in range(0, X.size, chunk):
        E = basis.evaluate(X[s:s + chunk], Y[s:s + chunk])
        G += (E * wts[s:s + chunk, None]).T @ E
    return G


def nodal_weights(grid, weight, sub=4):
    """chi0^2 averaged over each interior node's dual cell (sub x sub samples)."""
    X, Y = grid.nodes()
    off = (np.arange(sub) + 0.5) / sub - 0.5
    acc = np.zeros(X.size)
    for ox in off:
        for oy in off:
            acc += chi0_eval(weight, X + ox * grid.h, Y + oy * grid.h) ** 2
    return acc / sub ** 2


def _gram_nodal(basis, weight):
    g = basis.grid
    wts = nodal_weights(g, weight) * g.h ** 2
    V = basis.vectors
    return (V * wts[:, None]).T @ V
