"""Control map w = M^{-1} f, conditioning, control field and kappa growth."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .control_kernel import chi0_eval, psi_eval
from .mt_operator import HState, NumericalError, hnorm

NEAR_SINGULAR = 1e12
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class ControlSolution:
    w: HState
    condition_number: float
    control_norm: float
    lam_min: float
    lam_max: float
    residual: float
    method: str = "cholesky"
    near_singular: bool = False


def condition_number(mt):
    """lambda_max / lambda_min; inf when the smallest eigenvalue is not positive."""
    ev = mt.eigvalsh()
    lo, hi = float(ev[0]), float(ev[-1])
    return hi / lo if lo > 0 else float("inf")


def solve_control(mt, f):
    """Solve M w = Pi_omega f."""
    if f.n < mt.n:
        raise ValueError("target state has fewer modes than the matrix")
    if f.n > mt.n:
        if not np.array_equal(f.omegas[: mt.n], mt.omegas):
            raise ValueError("target state basis does not extend the matrix basis")
        f = f.truncate(mt.n)
    ev, vecs = mt.eigh()
    lam_min, lam_max = float(ev[0]), float(ev[-1])
    kappa = lam_max / lam_min if lam_min > 0 else float("inf")
    if kappa <= NEAR_SINGULAR:
        x = linalg.cho_solve(mt.cholesky(), f.c)
        method, flag = "cholesky", False
    else:
        keep = ev > lam_max / NEAR_SINGULAR
        x = vecs[:, keep] @ ((vecs[:, keep].T @ f.c) / ev[keep])
        method, flag = "eigh", True
    fn = np.linalg.norm(f.c)
    res = float(np.linalg.norm(mt.values @ x - f.c) / fn) if fn > 0 else 0.0
    if not flag and res > RESIDUAL_TOL:
        # one step of iterative refinement for ill-conditioned but SPD systems
        x = x + linalg.cho_solve(mt.cholesky(), f.c - mt.values @ x)
        res = float(np.linalg.norm(mt.values @ x - f.c) / fn)
        method = "cholesky+refine"
        if res > 100 * RESIDUAL_TOL * max(1.0, kappa * np.finfo(float).eps * 1e8):
            raise NumericalError(f"solve residual {res:.2e} above tolerance")
    w = HState(mt.omegas, x)
    return ControlSolution(w, kappa, hnorm(w), lam_min, lam_max, res, method, flag)


def control_field(w, basis, space_weight, time_weight, times, n=64):
    """Samples of v(t, x) = psi(t) chi0(x) sum_j [c_j sin(w_j (T - t)) + c_{N+j} cos(w_j (T - t))] e_j(x).

    Returns (xs, ys, fields) with fields of shape (len(times), n + 1, n + 1);
    points outside the domain are zero.
    """
    N = w.n
    x0, x1, y0, y1 = basis.domain.bbox
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    E = basis.evaluate(X.ravel(), Y.ravel(), np.arange(N))
    chi = chi0_eval(space_weight, X.ravel(), Y.ravel())
    T = time_weight.T
    out = np.empty((len(times), n + 1, n + 1))
    for i, t in enumerate(times):
        s = T - t
        coef = w.c0 * np.sin(w.omegas * s) + w.c1 * np.cos(w.omegas * s)
        out[i] = (psi_eval(time_weight, t) * chi * (E @ coef)).reshape(n + 1, n + 1)
    return xs, ys, out


@dataclass(frozen=True)
class GrowthFit:
    T: float
    slope: float
    intercept: float
    r2: float
    omega_max: float
    points: int


def kappa_growth(records):
    """Least-squares fit of log(kappa) against omega for each T.

    ``records`` is an iterable of (T, omega, kappa). Returns fits sorted by T.
    """
    by_t = {}
    for T, om, k in records:
        by_t.setdefault(float(T), []).append((float(om), float(k)))
    fits = []
    for T in sorted(by_t):
        pts = sorted(by_t[T])
        if len(pts) < 4:
            raise ValueError(f"need at least 4 cutoffs per time, got {len(pts)} at T={T}")
        om = np.array([p[0] for p in pts])
        lk = np.log([p[1] for p in pts])
        if not np.all(np.isfinite(lk)):
            raise ValueError(f"non-finite condition number at T={T}")
        reg = stats.linregress(om, lk)
        fits.append(GrowthFit(T, reg.slope, reg.intercept, reg.rvalue ** 2, om.max(), len(pts)))
    return fits


def kappa_sweep(system, times, cutoffs, smooth_time=False):
    """(T, omega, kappa) records over nested cutoffs of one Galerkin system."""
    from .control_kernel import TimeWeight

    out = []
    nmax = max(cutoffs)
    for T in times:
        big = system.matrix(nmax, TimeWeight(T, smooth_time))
        for n in sorted(cutoffs):
            out.append((T, float(system.omegas[n - 1]), condition_number(big.leading(n))))
    return out
