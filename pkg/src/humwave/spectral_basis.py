"""Dirichlet Laplacian eigenbases on the square, the disc and polygons.

Eigenfunctions are L2-normalised and sorted by frequency ``omega`` (so that
``-Laplace e = omega**2 e``).  Degenerate frequencies are ordered
deterministically: by the smaller ``k`` on the square, by ``(m, cos < sin)``
on the disc.  Finite-difference modes come from the 5-point stencil on the
nodes strictly inside the domain.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import eigsh

from .bessel import bessel_j, bessel_zeros_below
from .domains import DomainSpec

log = logging.getLogger(__name__)


class EigenSolverError(RuntimeError):
    """Raised when an eigensolve misses its residual target."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class EigenMode:
    omega: float
    label: tuple
    representation: str  # "analytic" or "grid"
    values: Optional[np.ndarray] = None


@dataclass(frozen=True)
class FDGrid:
    """Uniform grid with the mask of interior unknowns (arrays indexed [i_x, i_y])."""

    xs: np.ndarray
    ys: np.ndarray
    h: float
    interior: np.ndarray

    @property
    def shape(self):
        return self.interior.shape

    @property
    def n_unknowns(self):
        return int(self.interior.sum())

    def nodes(self):
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return X[self.interior], Y[self.interior]

    def to_full(self, vec):
        """Scatter interior values (n_int, ...) into a zero-padded nodal array."""
        vec = np.asarray(vec)
        full = np.zeros(self.shape + vec.shape[1:], dtype=vec.dtype)
        full[self.interior] = vec
        return full


class EigenBasis:
    """Ordered Dirichlet eigenpairs on one domain.

    ``kind`` is ``"square"`` or ``"disc"`` for analytic modes and ``"fd"``
    for finite-difference grid vectors (columns of ``vectors``, normalised in
    the cell-area weighted discrete L2 norm).
    """

    def __init__(self, domain, omegas, labels, kind, vectors=None, grid=None):
        self.domain = domain
        self.omegas = np.asarray(omegas, dtype=float)
        self.omegas.setflags(write=False)
        self.labels = [tuple(int(v) for v in lab) for lab in labels]
        self.kind = kind
        self.vectors = vectors
        self.grid = grid
        if vectors is not None:
            vectors.setflags(write=False)
        if kind == "disc":
            lab = np.array(self.labels).reshape(-1, 3)
            self._m = lab[:, 0]
            self._parity = lab[:, 2]
            self._norm = _disc_norms(self._m, self.omegas)

    def __len__(self):
        return len(self.omegas)

    def __repr__(self):
        return f"EigenBasis(kind={self.kind!r}, n={len(self)}, cutoff={self.cutoff:.4f})"

    @property
    def cutoff(self):
        return float(self.omegas[-1])

    @property
    def modes(self):
        rep = "grid" if self.kind == "fd" else "analytic"
        return [
            EigenMode(float(w), lab, rep, None if self.vectors is None else self.vectors[:, j])
            for j, (w, lab) in enumerate(zip(self.omegas, self.labels))
        ]

    def truncate(self, n):
        if n > len(self):
            raise ValueError(f"basis holds {len(self)} modes, asked for {n}")
        vec = None if self.vectors is None else self.vectors[:, :n]
        return EigenBasis(self.domain, self.omegas[:n], self.labels[:n], self.kind, vec, self.grid)

    def evaluate(self, x, y, idx=None):
        """Mode values at points: array of shape (npts, len(idx)).

        Points outside the closed domain get 0.  FD modes are interpolated
        bilinearly from the nodal values.
        """
        x = np.asarray(x, float).ravel()
        y = np.asarray(y, float).ravel()
        idx = np.arange(len(self)) if idx is None else np.atleast_1d(idx)
        inside = self.domain.contains(x, y, strict=False)
        if self.kind == "square":
            ks = np.array([self.labels[j][0] for j in idx])
            ls = np.array([self.labels[j][1] for j in idx])
            out = 2.0 * np.sin(np.pi * np.outer(x, ks)) * np.sin(np.pi * np.outer(y, ls))
        elif self.kind == "disc":
            out = self._disc_values(x, y, idx)
        else:
            out = self._fd_values(x, y, idx)
        out[~inside] = 0.0
        return out

    def radial_angular(self, r, theta, idx=None):
        """Separated disc factors: radial (len(r), n) and angular (len(theta), n)."""
        if self.kind != "disc":
            raise TypeError("radial/angular split exists only for disc modes")
        idx = np.arange(len(self)) if idx is None else np.atleast_1d(idx)
        r = np.asarray(r, float).ravel()
        theta = np.asarray(theta, float).ravel()
        rad = np.empty((r.size, idx.size))
        for col, j in enumerate(idx):
            rad[:, col] = self._norm[j] * bessel_j(self._m[j], self.omegas[j] * r)
        m = self._m[idx]
        ang = np.where(self._parity[idx] == 0, np.cos(np.outer(theta, m)), np.sin(np.outer(theta, m)))
        return rad, ang

    def _disc_values(self, x, y, idx):
        r = np.minimum(np.hypot(x, y), 1.0)
        th = np.arctan2(y, x)
        rad, ang = self.radial_angular(r, th, idx)
        return rad * ang

    def _fd_values(self, x, y, idx):
        g = self.grid
        full = g.to_full(self.vectors[:, idx])
        nx, ny = g.shape
        fx = (x - g.xs[0]) / g.h
        fy = (y - g.ys[0]) / g.h
        i = np.clip(np.floor(fx).astype(int), 0, nx - 2)
        j = np.clip(np.floor(fy).astype(int), 0, ny - 2)
        tx = np.clip(fx - i, 0.0, 1.0)[:, None]
        ty = np.clip(fy - j, 0.0, 1.0)[:, None]
        return ((1 - tx) * (1 - ty) * full[i, j] + tx * (1 - ty) * full[i + 1, j]
                + (1 - tx) * ty * full[i, j + 1] + tx * ty * full[i + 1, j + 1])


def _disc_norms(m, alpha):
    # int_0^1 J_m(a r)^2 r dr = J_{m+1}(a)^2 / 2 ; angular factor 2 pi (m = 0) or pi
    jp = np.array([bessel_j(mm + 1, a) for mm, a in zip(m, alpha)])
    ang = np.where(m == 0, 2.0 * np.pi, np.pi)
    return 1.0 / np.sqrt(ang * 0.5 * jp ** 2)


def square_modes(cutoff_count, grid_n=64):
    """First ``cutoff_count`` modes 2 sin(k pi x) sin(l pi y) of the unit square."""
    if cutoff_count < 1:
        raise ValueError("cutoff_count must be >= 1")
    kmax = int(np.sqrt(4.0 * cutoff_count / np.pi)) + 8
    while True:
        k, l = np.meshgrid(np.arange(1, kmax + 1), np.arange(1, kmax + 1), indexing="ij")
        k, l = k.ravel(), l.ravel()
        q = k * k + l * l
        order = np.lexsort((k, q))[:cutoff_count]
        # complete only if no lattice point outside the box can undercut the last one
        if q[order[-1]] < (kmax + 1) ** 2:
            break
        kmax *= 2
    k, l, q = k[order], l[order], q[order]
    return EigenBasis(DomainSpec.square(grid_n), np.pi * np.sqrt(q), list(zip(k, l)), "square")


def disc_modes(cutoff_count, grid_n=64):
    """First ``cutoff_count`` modes of the unit disc, c J_m(alpha_mk r) {cos, sin}(m theta)."""
    if cutoff_count < 1:
        raise ValueError("cutoff_count must be >= 1")
    # Weyl with the boundary term: N(w) ~ w^2/4 - w/2
    wmax = 10.0 * np.ceil((2.0 * np.sqrt(cutoff_count) + 6.0) / 10.0)
    while True:
        rows = []
        m = 0
        while True:
            zs = bessel_zeros_below(m, wmax)
            if zs.size == 0:
                break
            for k, a in enumerate(zs, start=1):
                rows.append((a, m, k, 0))
                if m > 0:
                    rows.append((a, m, k, 1))
            m += 1
        if len(rows) >= cutoff_count:
            break
        wmax += 10.0
    rows.sort(key=lambda r: (r[0], r[1], r[3]))
    rows = rows[:cutoff_count]
    omegas = [r[0] for r in rows]
    labels = [(r[1], r[2], r[3]) for r in rows]
    return EigenBasis(DomainSpec.disc(grid_n), omegas, labels, "disc")


def fd_laplacian(domain):
    """5-point -Laplace on the interior nodes of ``domain`` (Dirichlet rows removed).

    Returns
    -------
    A : scipy.sparse.csr_matrix
        Symmetric positive definite operator on the interior unknowns.
    grid : FDGrid
    """
    xs, ys, h = domain.grid()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    interior = domain.contains(X, Y, strict=True)
    n = int(interior.sum())
    if n == 0:
        raise ValueError("no interior grid node; refine grid_n")
    number = -np.ones(interior.shape, dtype=np.int64)
    number[interior] = np.arange(n)
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0 / h ** 2)]
    ii, jj = np.nonzero(interior)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        ok = (ni >= 0) & (ni < interior.shape[0]) & (nj >= 0) & (nj < interior.shape[1])
        nb = np.full(n, -1)
        nb[ok] = number[ni[ok], nj[ok]]
        keep = nb >= 0
        rows.append(number[ii[keep], jj[keep]])
        cols.append(nb[keep])
        vals.append(np.full(keep.sum(), -1.0 / h ** 2))
    A = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A, FDGrid(xs, ys, h, interior)


def fd_lowest_modes(operator, grid, count, domain=None, tol=1e-8):
    """Lowest ``count`` eigenpairs of the FD operator by shift-invert Lanczos.

    Eigenvectors are normalised so that ``h**2 * sum(v**2) == 1`` and signed
    so their largest-magnitude entry is positive.

    Raises
    ------
    EigenSolverError
        If a residual ``h*||A v - w^2 v||`` exceeds ``tol * w^2``.
    """
    n = operator.shape[0]
    if count > n // 4:
        raise ValueError(f"count={count} exceeds a quarter of the {n} unknowns")
    v0 = np.random.default_rng(0).standard_normal(n)
    lam, vec = eigsh(operator.tocsc(), k=count, sigma=0.0, which="LM", v0=v0, tol=1e-13)
    order = np.argsort(lam, kind="stable")
    lam, vec = lam[order], vec[:, order]
    vec = vec / grid.h
    pivot = vec[np.argmax(np.abs(vec), axis=0), np.arange(count)]
    vec *= np.sign(pivot)
    resid = grid.h * np.linalg.norm(operator @ vec - vec * lam, axis=0)
    if np.any(resid > tol * lam):
        raise EigenSolverError("FD eigenpairs did not reach the residual target", resid)
    basis = EigenBasis(domain, np.sqrt(lam), [(j,) for j in range(count)], "fd", np.ascontiguousarray(vec), grid)
    basis.residuals = resid
    return basis


def fd_modes(domain, count):
    """Convenience: assemble the FD operator and return its lowest modes."""
    A, grid = fd_laplacian(domain)
    return fd_lowest_modes(A, grid, count, domain=domain)


@dataclass(frozen=True)
class ScalarField:
    """Values on a tensor grid (indexed [i_x, i_y]) with the domain mask."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    mask: np.ndarray


def sample_on_grid(basis, index, n=64):
    """Sample mode ``index`` of ``basis`` on an (n+1)^2 grid over the bounding box."""
    xs, ys, _ = basis.domain.grid(n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = basis.evaluate(X, Y, [index])[:, 0].reshape(X.shape)
    return ScalarField(xs, ys, vals, basis.domain.contains(X, Y, strict=False))


def weyl_count(domain, omega):
    """Leading Weyl term Area * omega^2 / (4 pi)."""
    return domain.area * omega ** 2 / (4.0 * np.pi)
