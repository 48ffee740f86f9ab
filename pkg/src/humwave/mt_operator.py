"""Galerkin matrix of the control Gramian in the energy-orthonormal basis.

States live in H = H^1_0 x L^2 and are stored as 2N coefficients on

    phi_j = (e_j / omega_j, 0),  phi_{N+j} = (0, e_j),

so that c_j = omega_j <u0, e_j>, c_{N+j} = <u1, e_j> and the energy norm is
the Euclidean norm of c.
"""

import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .control_kernel import GramMatrix, TimeKernels, gram_matrix, time_kernels


class NumericalError(RuntimeError):
    """Raised when a matrix that should be SPD fails to factorize."""


@dataclass(frozen=True)
class HState:
    omegas: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, float)
        c = np.asarray(self.c, float)
        if c.shape != (2 * om.size,):
            raise ValueError(f"expected {2 * om.size} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("state coefficients must be finite")
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "c", c)

    @classmethod
    def zeros(cls, omegas):
        return cls(omegas, np.zeros(2 * len(omegas)))

    @classmethod
    def from_fields(cls, omegas, u0=None, u1=None):
        """Build from L2 coefficients of u0 and u1 on the e_j."""
        om = np.asarray(omegas, float)
        c = np.zeros(2 * om.size)
        if u0 is not None:
            c[: om.size] = om * np.asarray(u0, float)
        if u1 is not None:
            c[om.size:] = np.asarray(u1, float)
        return cls(om, c)

    @classmethod
    def one_mode(cls, omegas, n, slot="u0"):
        """State (e_n, 0) or (0, e_n), n counted from 1."""
        om = np.asarray(omegas, float)
        if not 1 <= n <= om.size:
            raise ValueError(f"mode {n} outside basis of size {om.size}")
        c = np.zeros(2 * om.size)
        if slot == "u0":
            c[n - 1] = om[n - 1]
        else:
            c[om.size + n - 1] = 1.0
        return cls(om, c)

    @property
    def n(self):
        return self.omegas.size

    @property
    def c0(self):
        return self.c[: self.n]

    @property
    def c1(self):
        return self.c[self.n:]

    @property
    def u0(self):
        return self.c0 / self.omegas

    @property
    def u1(self):
        return self.c1

    def truncate(self, n):
        """Pi_omega: keep the first n modes."""
        if n > self.n:
            raise ValueError("cannot truncate to a larger basis")
        return HState(self.omegas[:n], np.concatenate([self.c0[:n], self.c1[:n]]))

    def embed(self, omegas_big):
        """Zero-pad into a larger basis whose leading frequencies are ours."""
        big = np.asarray(omegas_big, float)
        if big.size < self.n or not np.array_equal(big[: self.n], self.omegas):
            raise ValueError("target basis must extend this state's basis")
        c = np.zeros(2 * big.size)
        c[: self.n] = self.c0
        c[big.size: big.size + self.n] = self.c1
        return HState(big, c)


def hnorm(state):
    """Energy norm ||(u0, u1)||_{H^1_0 x L^2}."""
    return float(np.linalg.norm(state.c))


class MTMatrix:
    """Symmetric 2N x 2N Galerkin matrix with lazily computed factorizations."""

    def __init__(self, values, omegas, meta=None, asymmetry=0.0):
        self.values = np.asarray(values, float)
        self.omegas = np.asarray(omegas, float)
        self.meta = dict(meta or {})
        self.asymmetry = float(asymmetry)
        if self.values.shape != (2 * self.omegas.size,) * 2:
            raise ValueError("matrix size does not match the frequency list")
        self._lock = threading.Lock()
        self._eig = None
        self._chol = None

    @property
    def n(self):
        return self.omegas.size

    def eigh(self):
        with self._lock:
            if self._eig is None:
                self._eig = linalg.eigh(self.values)
            return self._eig

    def eigvalsh(self):
        return self.eigh()[0]

    def cholesky(self):
        with self._lock:
            if self._chol is None:
                try:
                    self._chol = linalg.cho_factor(self.values, lower=True)
                except linalg.LinAlgError as exc:
                    raise NumericalError(f"Cholesky factorization failed: {exc}") from exc
            return self._chol

    def blocks(self):
        n = self.n
        V = self.values
        return V[:n, :n], V[:n, n:], V[n:, :n], V[n:, n:]

    def leading(self, n):
        """Matrix for the first n modes (nested cutoffs share entries)."""
        idx = np.r_[0:n, self.n:self.n + n]
        return MTMatrix(self.values[np.ix_(idx, idx)], self.omegas[:n], self.meta, self.asymmetry)

    def __matmul__(self, state):
        return HState(self.omegas, self.values @ state.c)


def assemble_mt(gram, kernels, omegas=None, meta=None):
    """M = [[a G, c G], [b G, d G]], symmetrized by averaging."""
    G = gram.values if isinstance(gram, GramMatrix) else np.asarray(gram, float)
    n = G.shape[0]
    if G.shape != (n, n) or any(k.shape != (n, n) for k in (kernels.a, kernels.b, kernels.c, kernels.d)):
        raise ValueError("Gram matrix and time kernels must share one square shape")
    M = np.empty((2 * n, 2 * n))
    M[:n, :n] = kernels.a * G
    M[:n, n:] = kernels.c * G
    M[n:, :n] = kernels.b * G
    M[n:, n:] = kernels.d * G
    asym = float(np.abs(M - M.T).max()) if n else 0.0
    if asym > 1e-10:
        raise NumericalError(f"assembled matrix asymmetry {asym:.3e} exceeds 1e-10")
    M = 0.5 * (M + M.T)
    if omegas is None:
        omegas = np.full(n, np.nan)
    return MTMatrix(M, omegas, meta, asym)


def mt_apply(state, gram, kernels, columns=None, chunk=512):
    """y = M_big c for a zero-padded state, streaming over row blocks.

    ``kernels`` may hold only the columns listed in ``columns`` (the support
    of ``state``); the full 2N_big square matrix is never formed.
    """
    G = gram.values if isinstance(gram, GramMatrix) else np.asarray(gram, float)
    nb = state.n
    if columns is None:
        columns = np.flatnonzero((state.c0 != 0) | (state.c1 != 0))
        if kernels.a.shape[1] == nb:
            kcols = columns
        else:
            raise ValueError("column-restricted kernels need explicit columns")
    else:
        columns = np.asarray(columns)
        kcols = np.arange(columns.size) if kernels.a.shape[1] == columns.size else columns
    y = np.zeros(2 * nb)
    if columns.size == 0:
        return HState(state.omegas, y)
    c0 = state.c0[columns]
    c1 = state.c1[columns]
    for r0 in range(0, nb, chunk):
        r = slice(r0, min(nb, r0 + chunk))
        g = G[r][:, columns]
        y[r] = (kernels.a[r][:, kcols] * g) @ c0 + (kernels.c[r][:, kcols] * g) @ c1
        y[nb + r0: nb + r.stop] = (kernels.b[r][:, kcols] * g) @ c0 + (kernels.d[r][:, kcols] * g) @ c1
    return HState(state.omegas, y)


class GalerkinSystem:
    """One eigenbasis plus window; control and verification cutoffs are prefixes.

    The Gram matrix is computed once at the largest cutoff; the matrix at any
    smaller cutoff is a sub-block.
    """

    def __init__(self, basis, space_weight, time_weight, gram=None):
        self.basis = basis
        self.space_weight = space_weight
        self.time_weight = time_weight
        self.gram = gram if gram is not None else gram_matrix(basis, space_weight)
        self.omegas = basis.omegas

    def __len__(self):
        return len(self.basis)

    def matrix(self, n, time_weight=None):
        tw = time_weight or self.time_weight
        om = self.omegas[:n]
        meta = {"T": tw.T, "smooth_time": tw.smooth, "cutoff": float(om[-1]), "n": n}
        return assemble_mt(self.gram.values[:n, :n], time_kernels(tw, om), om, meta)

    def apply(self, state):
        """Full-cutoff action on a state already expressed in this basis."""
        cols = np.flatnonzero((state.c0 != 0) | (state.c1 != 0))
        k = time_kernels(self.time_weight, self.omegas, self.omegas[cols])
        return mt_apply(state, self.gram, k, columns=cols)


@dataclass(frozen=True)
class JBlocks:
    """J M J^{-1} = 1/2 [[Q_plus, -Tcal], [-Tcal^*, Q_minus]]."""

    q_plus: np.ndarray
    q_minus: np.ndarray
    tcal: np.ndarray

    def conjugated(self):
        return 0.5 * np.block([[self.q_plus, -self.tcal], [-self.tcal.conj().T, self.q_minus]])


def j_matrix(n):
    I = np.eye(n)
    return 0.5 * np.block([[I, -1j * I], [I, 1j * I]])


def j_inverse(n):
    I = np.eye(n)
    return np.block([[I, I], [1j * I, -1j * I]])


def j_blocks(mt):
    """Complex blocks of M in the coordinates ((c0 - i c1)/2, (c0 + i c1)/2)."""
    A, C, B, D = mt.blocks()
    q_plus = A + D + 1j * (C - B)
    q_minus = A + D - 1j * (C - B)
    tcal = -(A - D - 1j * (B + C))
    return JBlocks(q_plus, q_minus, tcal)


def lp_bump(x):
    """C^2 cutoff: 1 on [0, 1/2], 0 on [1, inf), quintic smoothstep between."""
    t = np.clip(2.0 * np.abs(np.asarray(x, float)) - 1.0, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def lp_psi(k, s):
    """psi_0 = phi, psi_k(s) = phi(2^-k s) - phi(2^(1-k) s)."""
    s = np.asarray(s, float)
    if k < 0:
        raise ValueError("dyadic index must be nonnegative")
    if k == 0:
        return lp_bump(s)
    return lp_bump(s / 2.0 ** k) - lp_bump(s / 2.0 ** (k - 1))


def dyadic_projector(k, omegas):
    """Diagonal of psi_k(D) acting on both halves of an HState."""
    d = lp_psi(k, omegas)
    return np.concatenate([d, d])


def partial_sum_projector(k, omegas):
    """Diagonal of S_k(D) = sum_{j <= k} psi_j(D) = phi(2^-k D)."""
    d = lp_bump(np.asarray(omegas, float) / 2.0 ** k)
    return np.concatenate([d, d])


def log_magnitude(matrix, floor=1e-300):
    """log10 |entries| for heat-map dumps."""
    return np.log10(np.maximum(np.abs(matrix), floor))
