"""Acceptance criteria, one summary line each (see the terminal summary)."""

import math
import time

import numpy as np
import pytest

from humwave import DomainSpec
from humwave.control_kernel import (ControlRegion, SpaceWeight, TimeWeight, gram_matrix, psi_eval,
                                    quadrature_oracle, time_kernels)
from humwave.experiments import run, run_suite, suite_configs, SQUARE_LADDER
from humwave.hum_solver import solve_control
from humwave.mt_operator import (GalerkinSystem, HState, dyadic_projector, j_blocks, lp_psi)
from humwave.spectral_basis import disc_modes, fd_modes, square_modes

pytestmark = pytest.mark.slow

VALID2_KAPPA = [6.5, 6.6, 6.6, 7.1, 7.3, 7.5, 8.3, 8.8, 9.5]
VALID2_E = [29.2, 17.7, 17.3, 4.9, 3.2, 1.6, 0.5, 0.3, 0.2]
# rows: smooth, width, T, kappa, E, |w|
ENERGY_TABLE = [
    (False, 0.1, 2.5, 48.8303, 0.00518843, 504.287),
    (True, 0.2, 2.5, 204.048, 0.00140275, 1837.12),
    (True, 0.2, 4.7, 21.7869, 4.65892e-07, 364.013),
    (False, 0.1, 8.0, 21.1003, 0.00162583, 120.744),
    (True, 0.2, 8.0, 16.5497, 8.51442e-08, 189.361),
    (True, 0.2, 15.0, 12.017, 8.39923e-09, 100.616),
    (False, 0.3, 2.5, 4.20741, 0.0014823, 147.009),
    (True, 0.6, 2.5, 9.05136, 1.94519e-06, 336.704),
    (True, 0.6, 4.7, 3.09927, 2.99855e-08, 125.481),
    (False, 0.3, 8.0, 3.20921, 0.000488423, 39.9988),
    (True, 0.6, 8.0, 2.74172, 6.0204e-09, 69.8206),
    (True, 0.6, 15.0, 2.4113, 8.55119e-10, 37.1463),
]


def _by_name(reports):
    return {r.name: r for r in reports}


@pytest.fixture(scope="module")
def validation():
    single, ladder = suite_configs("validation")[:2]
    t0 = time.perf_counter()
    rep = run(single, write=False)
    t1 = time.perf_counter() - t0
    t0 = time.perf_counter()
    sweep = run(ladder, write=False)
    return rep, t1, sweep, time.perf_counter() - t0


def test_criterion_1_validation_row(validation, record):
    r, elapsed, _, _ = validation
    ok = abs(r.kappa / 7.5 - 1) <= 0.05 and abs(100 * r.E - 1.6) <= 0.5 and elapsed <= 300
    record(1, ok, f"kappa={r.kappa:.4f} (7.5 +-5%)  E={100 * r.E:.3f}% (1.6 +-0.5pp)  "
                  f"|w|={r.control_norm:.2f}  {elapsed:.1f}s")
    assert ok


def test_criterion_2_validation_sweep(validation, record):
    _, _, sweep, elapsed = validation
    rows = sorted(sweep.rows, key=lambda row: row["n"])
    assert [row["n"] for row in rows] == SQUARE_LADDER
    kap = np.array([row["kappa"] for row in rows])
    err = 100 * np.array([row["E"] for row in rows])
    k_ok = np.abs(kap / VALID2_KAPPA - 1) <= 0.10
    e_ok = np.abs(err / VALID2_E - 1) <= 0.30
    tail = err[SQUARE_LADDER.index(70):]
    mono = bool(np.all(np.diff(tail) < 0))
    ok = bool(k_ok.all() and e_ok.all() and mono and elapsed <= 1800)
    detail = "  ".join(f"{n}:{k:.2f}/{e:.3g}%" for n, k, e in zip(SQUARE_LADDER, kap, err))
    record(2, ok, f"{detail}  monotone>=70={mono}  {elapsed:.1f}s")
    assert ok


def test_criterion_3_error_rates(record):
    reps = _by_name(run_suite("error_rates", write=False))
    plain = reps["rates-plain"].extra["error_slope"]
    smooth = reps["rates-smooth"].extra["error_slope"]
    ok_plain = -1.6 <= plain <= -0.6
    ok_smooth = smooth <= -3.5
    record(3, ok_plain and ok_smooth,
           f"slope plain={plain:.3f} (need [-1.6,-0.6]: {'ok' if ok_plain else 'out'})  "
           f"slope smooth={smooth:.3f} (need <= -3.5: {'ok' if ok_smooth else 'out'})")
    assert ok_plain and ok_smooth


def test_criterion_4_energy_table(record):
    reps = run_suite("energy_table", write=False)
    got = {(row[0], row[1], row[2]): r for row, r in zip(ENERGY_TABLE, reps)}
    problems = []
    for (sm, w, T, kap, E, wn), r in zip(ENERGY_TABLE, reps):
        if abs(r.kappa / kap - 1) > 0.3 or abs(r.control_norm / wn - 1) > 0.3 or abs(math.log10(r.E / E)) > 1:
            problems.append(f"magnitude {sm},{w},{T}")
    pairs = [((False, 0.1, 2.5), (True, 0.2, 4.7)), ((False, 0.1, 8.0), (True, 0.2, 15.0)),
             ((False, 0.3, 2.5), (True, 0.6, 4.7)), ((False, 0.3, 8.0), (True, 0.6, 15.0))]
    for a, b in pairs:
        ra, rb = got[a], got[b]
        ratio = rb.control_norm / ra.control_norm
        if not (rb.E * 10 <= ra.E and 0.25 <= ratio <= 4):
            problems.append(f"pair {a}->{b}")
    keys = list(got)
    for a in keys:
        for b in keys:
            if a[0] != b[0] or a == b:
                continue
            longer = a[1] == b[1] and b[2] > a[2]
            wider = a[2] == b[2] and b[1] > a[1]
            if (longer or wider) and not (got[b].E < got[a].E and got[b].control_norm < got[a].control_norm):
                problems.append(f"order {a}->{b}")
    worst_k = max(abs(r.kappa / row[3] - 1) for row, r in zip(ENERGY_TABLE, reps))
    ok = not problems
    record(4, ok, f"12 rows, max kappa rel dev {worst_k:.1e}; "
                  + ("pairs and orderings hold" if ok else "; ".join(problems)))
    assert ok


def test_criterion_5_non_controlling_disc(record):
    reps = _by_name(run_suite("non_controlling", write=False))
    r53 = reps["noncontrol-first-plain-mode53"]
    r60 = reps["noncontrol-first-plain-mode60"]
    ratio = r60.control_norm / r53.control_norm
    ok = r53.kappa >= 1e3 and r53.E <= 0.02 and r60.E >= 0.10 and ratio >= 50
    record(5, ok, f"kappa={r53.kappa:.3g}  E53={100 * r53.E:.3g}%  E60={100 * r60.E:.3g}%  "
                  f"|w|53={r53.control_norm:.3g}  |w|60={r60.control_norm:.3g}  ratio={ratio:.3g}")
    assert ok


def test_criterion_6_condition_growth(record):
    (rep,) = run_suite("cond_growth", write=False)
    fits = rep.extra["fits"]
    t_gcc = rep.extra["gcc_time"]
    short = [f for f in fits if f["T"] < t_gcc]
    long_ = [f for f in fits if f["T"] > t_gcc]
    slopes = [f["slope"] for f in fits]
    ok_short = bool(short) and all(f["r2"] >= 0.9 and f["points"] >= 5 and f["slope"] > 0 for f in short)
    ok_dec = all(a > b for a, b in zip(slopes, slopes[1:]))
    ok_long = bool(long_) and all(abs(f["slope"]) * f["omega_max"] <= math.log(10) for f in long_)
    ok = ok_short and ok_dec and ok_long
    desc = "  ".join(f"T={f['T']}:{f['slope']:.4f}(R2 {f['r2']:.3f})" for f in fits)
    record(6, ok, f"gcc_time~{t_gcc:.2f}  {desc}  max long |s|*w={max(abs(f['slope']) * f['omega_max'] for f in long_):.2f}")
    assert ok


# ---------------------------------------------------------------- criterion 7


def _random_configs(rng, count):
    bases = {"square": square_modes(60), "disc": disc_modes(60),
             "trapezoid": fd_modes(DomainSpec.trapezoid(40), 40)}
    trap = DomainSpec.trapezoid()
    out = []
    for i in range(count):
        kind = ["square", "disc", "trapezoid"][i % 3]
        w = float(rng.uniform(0.15, 0.6))
        region = {"square": ControlRegion.square_two_sides(w),
                  "disc": ControlRegion.disc_strip(w, ["none", "inner", "outer"][i % 3], 0.5),
                  "trapezoid": ControlRegion.polygon_base(trap.vertices, w)}[kind]
        smooth = bool(rng.integers(2))
        T = float(rng.uniform(0.5, 8.0))
        n = int(rng.integers(10, len(bases[kind]) + 1))
        out.append((bases[kind], SpaceWeight(region, smooth), TimeWeight(T, bool(rng.integers(2))), n))
    return out


def _kernel_oracle_check(rng, count):
    worst = 0.0
    small = 0
    for i in range(count):
        T = float(rng.uniform(0.3, 6.0))
        wn = float(rng.uniform(0.5, 40.0))
        if i % 3 == 0:
            wm = wn + float(rng.uniform(-1e-3, 1e-3)) / T
            small += 1
        else:
            wm = float(rng.uniform(0.5, 40.0))
        w = TimeWeight(T, bool(i % 2))
        p2 = lambda t: psi_eval(w, t) ** 2
        k = time_kernels(w, [wn], [wm])
        top = wn + wm
        ref = (quadrature_oracle(lambda t: p2(t) * math.sin(wn * t) * math.sin(wm * t), 0, T, top),
               quadrature_oracle(lambda t: p2(t) * math.cos(wn * t) * math.sin(wm * t), 0, T, top),
               quadrature_oracle(lambda t: p2(t) * math.sin(wn * t) * math.cos(wm * t), 0, T, top),
               quadrature_oracle(lambda t: p2(t) * math.cos(wn * t) * math.cos(wm * t), 0, T, top))
        got = (k.a[0, 0], k.b[0, 0], k.c[0, 0], k.d[0, 0])
        worst = max(worst, max(abs(g - r) for g, r in zip(got, ref)))
    return worst, small


def _decay_constants(basis, cutoffs):
    sw = SpaceWeight(ControlRegion.square_two_sides(0.4), smooth=True)
    sys = GalerkinSystem(basis, sw, TimeWeight(3.0, smooth=True))
    qc, tc = [], []
    for n in cutoffs:
        jb = j_blocks(sys.matrix(n))
        om = basis.omegas[:n]
        gap = np.abs(om[:, None] - om[None, :])
        tot = om[:, None] + om[None, :]
        qc.append(max(np.abs(jb.q_plus * (1 + gap) ** 4).max(), np.abs(jb.q_minus * (1 + gap) ** 4).max()))
        tc.append(np.abs(jb.tcal * tot ** 2).max())
    return qc, tc


def _commutator_ratios(basis):
    sw = SpaceWeight(ControlRegion.square_two_sides(0.6), smooth=True)
    M = GalerkinSystem(basis, sw, TimeWeight(2.5 * 15 / 8, smooth=True)).matrix(len(basis))
    inv = np.linalg.inv(M.values)
    om = basis.omegas
    ks = [k for k in range(1, 12) if 2.0 ** (k - 2) >= om[0] and 2.0 ** k <= om[-1]]
    vals = []
    for k in ks:
        p = dyadic_projector(k, om)
        C = p[:, None] * inv - inv * p[None, :]
        vals.append(2.0 ** k * np.linalg.norm(C, 2))
    return ks, vals, [b / a for a, b in zip(vals, vals[1:])]


def test_criterion_7_property_suite(record, square2000):
    rng = np.random.default_rng(7)
    parts = {}

    lam = []
    for basis, sw, tw, n in _random_configs(rng, 20):
        M = GalerkinSystem(basis.truncate(n), sw, tw).matrix(n)
        lam.append(M.eigvalsh()[0])
        M.cholesky()
    parts["spd"] = (min(lam) > 0, f"min eig {min(lam):.2e}")

    worst, small = _kernel_oracle_check(rng, 1000)
    parts["kernels"] = (worst <= 1e-10, f"kernel err {worst:.1e} ({small} near-degenerate)")

    whole = SpaceWeight(ControlRegion("whole"))
    gerr = max(np.abs(gram_matrix(b, whole).values - np.eye(len(b))).max()
               for b in (square_modes(300), disc_modes(200)))
    parts["identity"] = (gerr <= 1e-10, f"G-I {gerr:.1e}")

    b30 = square_modes(30)
    orders = []
    for smooth in (False, True):
        sw = SpaceWeight(ControlRegion.square_two_sides(0.25), smooth)
        G = gram_matrix(b30, sw).values
        errs = [np.abs(gram_matrix(b30, sw, "grid", q).values - G).max() for q in (1, 2, 4)]
        orders += list(np.log2(np.array(errs[:-1]) / errs[1:]))
    parts["order"] = (min(orders) >= 1.7, f"grid order {min(orders):.2f}")

    sys = GalerkinSystem(square_modes(200), SpaceWeight(ControlRegion.square_two_sides(0.2)), TimeWeight(3.0))
    M = sys.matrix(200)
    rt = 0.0
    for _ in range(5):
        x = rng.normal(size=400)
        rt = max(rt, np.linalg.norm(solve_control(M, M @ HState(M.omegas, x)).w.c - x) / np.linalg.norm(x))
    parts["roundtrip"] = (rt <= 1e-8, f"round trip {rt:.1e}")

    s = rng.uniform(0, 2000, 5000)
    pou = np.abs(sum(lp_psi(k, s) for k in range(14)) - 1).max()
    om = square2000.omegas
    disjoint = all(not np.any(dyadic_projector(i, om) * dyadic_projector(j, om))
                   for i in range(10) for j in range(i + 2, 12))
    parts["dyadic"] = (pou <= 1e-14 and disjoint, f"partition err {pou:.0e}, disjoint={disjoint}")

    qc, tc = _decay_constants(square2000, (50, 100, 200))
    qr, tr = max(qc) / min(qc), max(tc) / min(tc)
    parts["decay"] = (qr <= 3 and tr <= 3, f"Q const {qc[0]:.3g} ratio {qr:.2f}, T const {tc[0]:.3g} ratio {tr:.2f}")

    ks, vals, ratios = _commutator_ratios(square2000.truncate(1300))
    parts["commutator"] = (all(0.3 <= r <= 1.7 for r in ratios),
                           f"commutator k={ks} ratios {', '.join(f'{r:.2f}' for r in ratios)}")

    ok = all(v[0] for v in parts.values())
    record(7, ok, "; ".join(f"{k}:{'ok' if v[0] else 'FAIL'} {v[1]}" for k, v in parts.items()))
    assert ok


def test_criterion_8_finite_differences(record, validation):
    exact_run = validation[0]
    fd = fd_modes(DomainSpec.square(256), 100)
    freq = np.abs(fd.omegas / square_modes(100).omegas - 1).max()
    cfg = suite_configs("validation")[2]
    r = run(cfg.replace(sweep_n=[]), write=False)
    dk = abs(r.kappa / exact_run.kappa - 1)
    de = abs(r.E / exact_run.E - 1)
    ok = freq <= 0.01 and dk <= 0.10 and de <= 0.10
    record(8, ok, f"max freq dev {100 * freq:.3f}%  FD kappa={r.kappa:.4f} (dev {100 * dk:.2f}%)  "
                  f"FD E={100 * r.E:.3f}% (dev {100 * de:.1f}%)")
    assert ok


def test_criterion_9_frequency_localization(record):
    reps = _by_name(run_suite("one_mode", write=False))
    plain = reps["onemode-plain"].extra["max_profile"]
    smooth = reps["onemode-smooth"].extra["max_profile"]
    ratio = smooth / plain
    ok = ratio <= 1e-2
    record(9, ok, f"max profile plain={plain:.3g} smooth={smooth:.3g} ratio={ratio:.2g} "
                  f"(<=1e-2; <=1e-4 {'met' if ratio <= 1e-4 else 'not met'})")
    assert ok
