"""Experiment runner: basis -> window -> Gram/kernels -> M -> solve -> reconstruct."""

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cache as cache_mod
from .cache import Cache, canonical_json, config_digest, write_atomic
from .config import ExperimentConfig
from .control_kernel import GramMatrix, gram_matrix
from .diagnostics import (box_state, contour_levels, dirac_state, gcc_sample, project_state,
                          reconstruct, reconstruction_error, render_field, rotated_box,
                          spectral_error_profile, uniqueness_time)
from .hum_solver import kappa_growth, solve_control
from .mt_operator import GalerkinSystem, HState
from .spectral_basis import disc_modes, fd_modes, square_modes

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
_MEMO = {}
_MEMO_LIMIT = 8


@dataclass
class ExperimentReport:
    name: str
    digest: str
    config: dict
    kappa: float
    E: float
    control_norm: float
    lam_min: float
    lam_max: float
    n_control: int
    cutoff: float
    n_verify: int
    cutoff_verify: float
    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    timing: float = 0.0
    artifacts: dict = field(default_factory=dict)

    def numbers(self):
        """Everything except timing and file paths."""
        d = asdict(self)
        d.pop("timing")
        d.pop("artifacts")
        d["config"] = {k: v for k, v in d["config"].items() if k not in ("output_dir", "cache_dir")}
        return d

    def result_digest(self):
        return config_digest(self.numbers())

    def to_json(self):
        d = asdict(self)
        d["schema_version"] = REPORT_SCHEMA_VERSION
        d["result_digest"] = self.result_digest()
        return json.dumps(d, indent=2, sort_keys=True, default=cache_mod._jsonable)


# ---------------------------------------------------------------- cached builders


def _memo(key, build):
    k = canonical_json(key)
    if k not in _MEMO:
        if len(_MEMO) >= _MEMO_LIMIT:
            _MEMO.pop(next(iter(_MEMO)))
        _MEMO[k] = build()
    return _MEMO[k]


def clear_memo():
    _MEMO.clear()


def _basis_key(domain, kind, count):
    d = domain.to_dict()
    if kind != "fd":
        d.pop("grid_n")
    return {"what": "basis", "kind": kind, "domain": d, "count": count}


def get_basis(domain, kind, count, store=None):
    key = _basis_key(domain, kind, count)

    def build():
        if store is not None:
            arrays = store.load("basis", key, b"HUME")
            if arrays is not None:
                return cache_mod.load_basis_arrays(domain, kind, arrays)
        if kind == "square":
            b = square_modes(count, domain.grid_n)
        elif kind == "disc":
            b = disc_modes(count, domain.grid_n)
        else:
            b = fd_modes(domain, count)
        if store is not None:
            store.store("basis", key, b"HUME", cache_mod.save_basis_arrays(b))
        return b

    return _memo(key, build)


def get_gram(basis, weight, store=None):
    key = {"what": "gram", "basis": _basis_key(basis.domain, basis.kind, len(basis)),
           "weight": weight.to_dict()}

    def build():
        if store is not None:
            arrays = store.load("gram", key, b"HUMG")
            if arrays is not None:
                return GramMatrix(arrays[0], "cached", 0)
        g = gram_matrix(basis, weight)
        if store is not None:
            store.store("gram", key, b"HUMG", [g.values])
        return g

    return _memo(key, build)


def _exact_kind(cfg):
    return {"unit_square": "square", "unit_disc": "disc"}.get(cfg.domain)


def _control_count(cfg, omegas):
    if cfg.omega_control is None:
        return cfg.n_control
    n = int(np.searchsorted(omegas, cfg.omega_control, side="right"))
    if n < 1:
        raise ValueError("omega_control is below the first frequency")
    return n


def input_state(cfg, basis):
    """Target data in the first len(basis) modes."""
    if cfg.input == "one_mode":
        return HState.one_mode(basis.omegas, cfg.mode, cfg.slot)
    if cfg.input == "dirac":
        return dirac_state(basis, cfg.point, cfg.n_input)
    box = tuple(cfg.box)
    if cfg.box_angle:
        box = rotated_box(box, cfg.box_angle)
    return box_state(basis, box, cfg.n_input)


# ---------------------------------------------------------------- run


def run(cfg, store=None, write=True):
    """Execute one configuration; returns an ExperimentReport."""
    t0 = time.perf_counter()
    if isinstance(cfg, dict):
        from .config import from_mapping

        cfg = from_mapping(cfg)
    if store is None and cfg.cache_dir:
        store = Cache(cfg.cache_dir)
    domain = cfg.domain_spec()
    exact = _exact_kind(cfg)
    sw = cfg.space_weight()
    times = [float(t) for t in (cfg.sweep_T or [cfg.T])]

    vkind = exact if exact else "fd"
    vbasis = get_basis(domain, vkind, cfg.n_verify, store)
    big = GalerkinSystem(vbasis, sw, cfg.time_weight(), get_gram(vbasis, sw, store))
    n_main = _control_count(cfg, vbasis.omegas)
    counts = sorted(set(int(n) for n in (cfg.sweep_n or [n_main])))
    cross = cfg.basis == "fd" and exact is not None

    u = input_state(cfg, vbasis)
    if cross:
        cbasis = get_basis(domain, "fd", max(counts + [n_main]), store)
        small = GalerkinSystem(cbasis, sw, cfg.time_weight(), get_gram(cbasis, sw, store))
        last = int(max(np.flatnonzero(u.c0).max(initial=-1), np.flatnonzero(u.c1).max(initial=-1))) + 1
        f_full = project_state(u.truncate(max(last, 1)), vbasis.truncate(max(last, 1)), cbasis)
    else:
        cbasis, small, f_full = vbasis, big, u

    rows = []
    main = None
    for T in times:
        tw = cfg.time_weight(T)
        big.time_weight = tw
        small.time_weight = tw
        M_all = small.matrix(max(counts + [n_main]))
        for n in sorted(set(counts + [n_main])):
            M = M_all.leading(n)
            sol = solve_control(M, f_full.truncate(n))
            w_big = project_state(sol.w, cbasis.truncate(n), vbasis) if cross else sol.w.embed(vbasis.omegas)
            y = big.apply(w_big)
            E = reconstruction_error(u, y)
            row = {"T": T, "n": n, "omega": float(cbasis.omegas[n - 1]), "kappa": sol.condition_number,
                   "log_kappa": math.log(sol.condition_number) if math.isfinite(sol.condition_number) else math.inf,
                   "E": E, "control_norm": sol.control_norm, "lam_min": sol.lam_min,
                   "lam_max": sol.lam_max, "residual": sol.residual, "method": sol.method}
            if n in counts:
                rows.append(row)
            if T == float(cfg.T) and n == n_main:
                main = (row, sol, y, w_big)
    row, sol, y, w_big = main
    name = cfg.name or f"run-{cfg.digest()[:10]}"
    report = ExperimentReport(
        name=name, digest=cfg.digest(), config=cfg.to_dict(), kappa=row["kappa"], E=row["E"],
        control_norm=row["control_norm"], lam_min=row["lam_min"], lam_max=row["lam_max"],
        n_control=n_main, cutoff=row["omega"], n_verify=cfg.n_verify,
        cutoff_verify=float(vbasis.omegas[-1]), rows=rows)
    p0, p1 = spectral_error_profile(u, y)
    report.extra["max_profile"] = float(max(p0.max(), p1.max()))
    report.extra["max_profile_below_cutoff"] = float(max(p0[:n_main].max(), p1[:n_main].max()))
    if len(counts) >= 2:
        sel = [r for r in rows if r["T"] == float(cfg.T)]
        if len(sel) >= 2 and all(r["E"] > 0 for r in sel):
            slope = np.polyfit(np.log([r["omega"] for r in sel]), np.log([r["E"] for r in sel]), 1)[0]
            report.extra["error_slope"] = float(slope)
    report.timing = time.perf_counter() - t0
    if write:
        _write_outputs(cfg, report, u, y, sol, vbasis, cbasis, w_big)
    return report


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    tmp.replace(path)
    return str(path)


def _write_outputs(cfg, report, u, y, sol, vbasis, cbasis, w_big):
    out = Path(cfg.output_dir)
    name = report.name
    arts = report.artifacts
    keys = ["T", "n", "omega", "kappa", "log_kappa", "E", "control_norm", "lam_min", "lam_max",
            "residual", "method"]
    arts["rows"] = _write_csv(out / f"{name}-rows.csv", keys, [[r[k] for k in keys] for r in report.rows])
    p0, p1 = spectral_error_profile(u, y)
    wn = sol.w.n
    prof = []
    for j in range(u.n):
        wc0 = sol.w.c0[j] if j < wn else ""
        wc1 = sol.w.c1[j] if j < wn else ""
        prof.append([j + 1, vbasis.omegas[j], u.c0[j], u.c1[j], wc0, wc1, y.c0[j], y.c1[j], p0[j], p1[j]])
    arts["profile"] = _write_csv(out / f"{name}-profile.csv",
                                 ["index", "omega", "u_c0", "u_c1", "w_c0", "w_c1", "y_c0", "y_c1",
                                  "err_u0", "err_u1"], prof)
    if cfg.field_n > 0:
        diff = HState(u.omegas, u.c - y.c)
        for tag, st, basis in (("u0", u, vbasis), ("w0", w_big, vbasis), ("err0", diff, vbasis)):
            fld = render_field(st, basis, "u0", cfg.field_n)
            X, Y = np.meshgrid(fld.xs, fld.ys, indexing="ij")
            m = fld.mask
            arts[f"field_{tag}"] = _write_csv(out / f"{name}-field-{tag}.csv", ["x", "y", "value"],
                                              zip(X[m], Y[m], fld.values[m]))
            arts[f"contours_{tag}"] = _write_csv(out / f"{name}-contours-{tag}.csv",
                                                 ["level", "area_fraction_above"], contour_levels(fld))
    path = out / f"{name}-report.json"
    arts["report"] = str(path)
    write_atomic(path, report.to_json().encode())


# ---------------------------------------------------------------- suites


SQUARE_LADDER = [52, 55, 60, 70, 80, 100, 200, 300, 500]
RATE_LADDER = [60, 80, 100, 130, 170, 220, 290, 380, 500]
GROWTH_TIMES = [1.25, 1.5, 1.75, 2.0, 2.5, 3.0]
GROWTH_CUTOFFS = [50, 100, 150, 200, 300, 400, 500, 600]
# the 4.7 rows of the energy table are 15/8 of 2.5
ENERGY_ROWS = [
    (False, 0.1, 2.5), (True, 0.2, 2.5), (True, 0.2, 2.5 * 15 / 8),
    (False, 0.1, 8.0), (True, 0.2, 8.0), (True, 0.2, 15.0),
    (False, 0.3, 2.5), (True, 0.6, 2.5), (True, 0.6, 2.5 * 15 / 8),
    (False, 0.3, 8.0), (True, 0.6, 8.0), (True, 0.6, 15.0),
]
NONCONTROL = dict(domain="unit_disc", region="disc_radius_strip", width=0.4, r_cut=0.5, T=8.0,
                  n_control=300, n_verify=2000)


def suite_configs(name, base=None):
    """Frozen bundle of (config) for a named suite."""
    b = dict(base or {})

    def C(**kw):
        d = dict(b)
        d.update(kw)
        return ExperimentConfig(**d)

    if name == "validation":
        return [C(name="valid1", n_control=100),
                C(name="valid2", n_control=100, sweep_n=SQUARE_LADDER),
                C(name="valid1-fd", basis="fd", grid_n=256, n_control=100,
                  sweep_n=[52, 55, 60, 70, 80, 100])]
    if name == "one_mode":
        return [C(name="onemode-plain", n_control=200, field_n=64),
                C(name="onemode-smooth", n_control=200, width=0.4, smooth_space=True, smooth_time=True,
                  field_n=64)]
    if name == "dirac":
        sq = dict(input="dirac", point=[0.7, 0.3], n_input=100, n_control=200, field_n=96)
        dc = dict(domain="unit_disc", region="disc_radius_strip", width=0.2, point=[-0.4, 0.3],
                  input="dirac", n_control=300, n_verify=1000, field_n=96)
        tz = dict(domain="trapezoid", basis="fd", grid_n=128, region="polygon_base_strip",
                  width=0.2, input="dirac", point=[0.5, 0.4], n_input=120, n_control=160,
                  n_verify=300, field_n=96)
        out = []
        for sm in (False, True):
            tag = "smooth" if sm else "plain"
            wmul = 2 if sm else 1
            out.append(C(name=f"dirac-square-{tag}", smooth_space=sm, smooth_time=sm,
                         width=0.2 * wmul, **sq))
            out.append(C(name=f"dirac-disc100-{tag}", smooth_space=sm, smooth_time=sm, n_input=100,
                         **{**dc, "width": dc["width"] * wmul}))
            out.append(C(name=f"dirac-trapezoid-{tag}", smooth_space=sm, smooth_time=sm,
                         **{**tz, "width": tz["width"] * wmul}))
        out.append(C(name="dirac-disc200-smooth", smooth_space=True, smooth_time=True, n_input=200,
                     **{**dc, "width": 0.4}))
        return out
    if name == "box":
        bx = dict(input="box", box=[0.6, 0.8, 0.2, 0.4], n_input=800, n_control=1000, field_n=96)
        return [C(name="box-plain", width=0.1, **bx),
                C(name="box-smooth", width=0.2, smooth_space=True, smooth_time=True, **bx),
                C(name="box-rotated-smooth", width=0.2, smooth_space=True, smooth_time=True,
                  box_angle=math.pi / 4, **bx)]
    if name == "error_rates":
        return [C(name="rates-plain", n_control=100, sweep_n=RATE_LADDER),
                C(name="rates-smooth", n_control=100, width=0.4, smooth_space=True, smooth_time=True,
                  sweep_n=RATE_LADDER)]
    if name == "energy_table":
        out = []
        for i, (sm, w, T) in enumerate(ENERGY_ROWS):
            out.append(C(name=f"energy-{i + 1:02d}", mode=500, n_control=1000, width=w, T=T,
                         smooth_space=sm, smooth_time=sm))
        return out
    if name == "cond_growth":
        return [C(name="growth", n_control=GROWTH_CUTOFFS[0], n_verify=max(GROWTH_CUTOFFS),
                  T=GROWTH_TIMES[-1], sweep_T=GROWTH_TIMES, sweep_n=GROWTH_CUTOFFS)]
    if name == "non_controlling":
        out = []
        for sm in (False, True):
            tag = "smooth" if sm else "plain"
            T = NONCONTROL["T"] * 15 / 8 if sm else NONCONTROL["T"]
            for trunc, dom in (("inner", "first"), ("outer", "second")):
                for mode in ((53, 60) if trunc == "inner" else (53,)):
                    out.append(C(name=f"noncontrol-{dom}-{tag}-mode{mode}",
                                 **{**NONCONTROL, "T": T}, trunc=trunc, mode=mode,
                                 smooth_space=sm, smooth_time=sm))
        return out
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")


SUITES = ("validation", "one_mode", "dirac", "box", "error_rates", "energy_table", "cond_growth",
          "non_controlling")


def run_suite(name, output_dir="humwave-out", cache_dir="", base=None, write=True):
    """Run every configuration of a suite and write the combined table."""
    base = dict(base or {})
    base.setdefault("output_dir", output_dir)
    base.setdefault("cache_dir", cache_dir)
    cfgs = suite_configs(name, base)
    store = Cache(cache_dir) if cache_dir else None
    reports = [run(c, store, write) for c in cfgs]
    if name == "cond_growth":
        _growth_extras(cfgs[0], reports[0])
    if write:
        cols = ["name", "T", "n", "omega", "kappa", "E", "control_norm"]
        rows = []
        for r in reports:
            for row in r.rows:
                rows.append([r.name] + [row[k] for k in cols[1:]])
        _write_csv(Path(output_dir) / f"suite-{name}.csv", cols, rows)
        if name == "cond_growth":
            fits = reports[0].extra["fits"]
            _write_csv(Path(output_dir) / "suite-cond_growth-fits.csv",
                       ["T", "slope", "intercept", "r2", "omega_max", "points"],
                       [[f[k] for k in ("T", "slope", "intercept", "r2", "omega_max", "points")]
                        for f in fits])
    return reports


def _growth_extras(cfg, report):
    fits = kappa_growth((r["T"], r["omega"], r["kappa"]) for r in report.rows)
    report.extra["fits"] = [asdict(f) for f in fits]
    g = gcc_sample(cfg.domain_spec(), cfg.control_region(), max(GROWTH_TIMES), density=16,
                   seed=cfg.seed, horizon=6.0)
    report.extra["gcc_time"] = g.gcc_time
    report.extra["uniqueness_time"] = uniqueness_time(cfg.domain_spec(), cfg.control_region())
