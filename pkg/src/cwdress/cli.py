"""Batch front end: config-driven pipelines with CSV residual reports.

Config files are line-oriented: "[section]" headers, "key = value" pairs,
'#' comments, UTF-8.  Reports are CSV with header check,value,tolerance,
pass,grid,ms; values carry 17 significant digits so reruns with the same
config and seed are byte-identical apart from the timing column.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import grid as g
from .connections import assemble_family, curvature_residual, spectral_deform
from .dressing import (backlund_gauge, dress, permute,
                       plane_isotropy_residual)
from .quaternionic import (darboux, first_integral_drift, integrate_x_riccati,
                           lift_residual, parallel_plane_line, riccati_params,
                           sphere_residuals, to_quaternionic)
from .surface import (GENERATORS, SurfaceGrid, central_sphere,
                      cw_residual_pair, fit_multiplier, generate_surface,
                      quadratic_differential, read_cwsurf, split_connection,
                      willmore_energy, write_cwsurf)
from .untwisted import UntwistedFactor, normal_split, untwist

BACKENDS = (g.FD2, g.SPECTRAL)


# ---------------------------------------------------------------------------
# config

@dataclass
class SurfaceConfig:
    kind: str = "clifford_torus"
    nx: int = 64
    ny: int = 64
    lx: float | None = None
    ly: float | None = None
    radius: float = 1.0
    file: str | None = None
    backend: str = g.FD2


@dataclass
class TransformConfig:
    type: str = "check"
    mu: complex = 1.0
    alpha: complex = 0.5
    alpha2: complex = 0.32 + 0.27j
    nu: complex = 2.0
    seed: int = 0
    seed2: int | None = None
    substeps: int = 3


@dataclass
class ReportConfig:
    out: str = "report.csv"
    surface_out: str = "transformed.cwsurf"
    export_mode: str = "s4_csv"
    export_out: str = "mesh.csv"
    tolerances: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    surface: SurfaceConfig = field(default_factory=SurfaceConfig)
    transform: TransformConfig = field(default_factory=TransformConfig)
    report: ReportConfig = field(default_factory=ReportConfig)


class ConfigError(ValueError):
    pass


def _parse_number(text: str, line_no: int, key: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"line {line_no}: field {key!r}: not a number: {text!r}")
    if not np.isfinite(v):
        raise ConfigError(f"line {line_no}: field {key!r}: not finite")
    return v


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    section = None
    complex_parts: dict[tuple, dict] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("surface", "transform", "report", "export"):
                raise ConfigError(f"line {line_no}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value")
        if section is None:
            raise ConfigError(f"line {line_no}: key before any [section]")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        val = val.strip()
        _apply_key(cfg, section, key, val, line_no, complex_parts)
    for (section, base), parts in complex_parts.items():
        value = complex(parts.get("re", 0.0), parts.get("im", 0.0))
        _set_complex(cfg, base, value)
    _validate(cfg)
    return cfg


def _apply_key(cfg: RunConfig, section: str, key: str, val: str, line_no: int,
               complex_parts: dict) -> None:
    if section == "surface":
        s = cfg.surface
        if key == "kind":
            if val not in GENERATORS + ("file",):
                raise ConfigError(f"line {line_no}: unknown surface kind {val!r}")
            s.kind = val
        elif key in ("nx", "ny"):
            setattr(s, key, int(_parse_number(val, line_no, key)))
        elif key in ("lx", "ly", "radius"):
            setattr(s, key, _parse_number(val, line_no, key))
        elif key == "file":
            s.file = val
        elif key == "backend":
            if val not in BACKENDS:
                raise ConfigError(f"line {line_no}: backend must be one of {BACKENDS}")
            s.backend = val
        else:
            raise ConfigError(f"line {line_no}: unknown surface field {key!r}")
    elif section == "transform":
        t = cfg.transform
        if key == "type":
            t.type = val
        elif key in ("seed", "seed2", "substeps"):
            setattr(t, key, int(_parse_number(val, line_no, key)))
        elif key.endswith("_re") or key.endswith("_im"):
            base, part = key[:-3], key[-2:]
            if base not in ("mu", "alpha", "alpha2", "nu"):
                raise ConfigError(f"line {line_no}: unknown transform field {key!r}")
            complex_parts.setdefault((section, base), {})[part] = \
                _parse_number(val, line_no, key)
        elif key in ("mu", "alpha", "alpha2", "nu"):
            setattr(t, key, complex(_parse_number(val, line_no, key)))
        else:
            raise ConfigError(f"line {line_no}: unknown transform field {key!r}")
    elif section == "report":
        r = cfg.report
        if key == "out":
            r.out = val
        elif key == "surface_out":
            r.surface_out = val
        elif key.startswith("tol_"):
            r.tolerances[key[4:]] = _parse_number(val, line_no, key)
        else:
            raise ConfigError(f"line {line_no}: unknown report field {key!r}")
    elif section == "export":
        r = cfg.report
        if key == "mode":
            if val not in ("s4_csv", "stereo_obj"):
                raise ConfigError(f"line {line_no}: unknown export mode {val!r}")
            r.export_mode = val
        elif key == "out":
            r.export_out = val
        else:
            raise ConfigError(f"line {line_no}: unknown export field {key!r}")


def _set_complex(cfg: RunConfig, base: str, value: complex) -> None:
    setattr(cfg.transform, base, value)


def _validate(cfg: RunConfig) -> None:
    t = cfg.transform
    if abs(abs(t.mu) - 1.0) > 1e-12 and t.type == "spectral":
        raise ConfigError("spectral transform needs |mu| = 1")
    for name in ("alpha", "alpha2"):
        v = getattr(t, name)
        if abs(abs(v) - 1.0) < 1e-12:
            raise ConfigError(f"{name} must avoid the unit circle")
    if abs(abs(t.nu) - 1.0) < 1e-12 or t.nu in (0, 1):
        raise ConfigError("nu must avoid 0, 1 and the unit circle")
    if cfg.surface.kind == "file" and not cfg.surface.file:
        raise ConfigError("surface kind 'file' needs a file = <path> entry")


# ---------------------------------------------------------------------------
# report

@dataclass
class ReportRow:
    check: str
    value: float
    tolerance: float
    grid: str
    ms: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def format_report(rows) -> str:
    lines = ["check,value,tolerance,pass,grid,ms"]
    for r in rows:
        lines.append("%s,%.17g,%.17g,%d,%s,%.3f"
                     % (r.check, r.value, r.tolerance, int(r.passed), r.grid,
                        r.ms))
    return "\n".join(lines) + "\n"


class _Timer:
    def __init__(self):
        self.t0 = time.perf_counter()

    def lap(self) -> float:
        t = time.perf_counter()
        ms = 1e3 * (t - self.t0)
        self.t0 = t
        return ms


# default tolerances; [report] tol_<name> entries override
TOLERANCES = {
    "nullity": 1e-12,
    "conformality": 1e-9,
    "flatness@2": 1e-3,
    "flatness@i": 1e-3,
    "flatness@2+i": 1e-3,
    "normalization@1": 0.0,
    "reality@2+i": 1e-12,
    "cw_residual": 5e-2,
    "cw_closed": 1e-6,
    "gauge_residual": 1e-6,
    "coverage_gap": 0.05,
    "lambda_isotropy": 1e-5,
    "gauge_reality": 1e-6,
    "gauge_det": 1e-7,
    "q_invariance": 1e-4,
    "cw_ratio": 5.0,
    "permutability": 1e-6,
    "lambda12_agreement": 1e-5,
    "riccati_drift": 1e-6,
    "riccati_path_independence": 1e-6,
    "lift_identity": 1e-8,
    "sphere_unit": 1e-10,
}


def _tol(cfg: RunConfig, name: str, default: float | None = None) -> float:
    if name in cfg.report.tolerances:
        return cfg.report.tolerances[name]
    if default is not None:
        return default
    return TOLERANCES.get(name, float("inf"))


# ---------------------------------------------------------------------------
# pipelines

def _build_surface(cfg: RunConfig):
    s = cfg.surface
    if s.kind == "file":
        surf = read_cwsurf(s.file, backend=s.backend)
    else:
        kw = {"radius": s.radius} if s.kind == "cmc_cylinder" else {}
        surf = generate_surface(s.kind, nx=s.nx, ny=s.ny, lx=s.lx, ly=s.ly,
                                backend=s.backend, **kw)
    return surf


def _base_pipeline(cfg: RunConfig):
    surf = _build_surface(cfg)
    csc = central_sphere(surf)
    nv = split_connection(csc)
    mult = fit_multiplier(nv)
    fam = assemble_family(nv, mult)
    return surf, csc, nv, mult, fam


def _grid_label(surf) -> str:
    return f"{surf.spec.nx}x{surf.spec.ny}"


def run_check(cfg: RunConfig) -> list:
    timer = _Timer()
    surf, csc, nv, mult, fam = _base_pipeline(cfg)
    grid = _grid_label(surf)
    rows = [
        ReportRow("nullity", surf.nullity_residual(), _tol(cfg, "nullity"),
                  grid, timer.lap()),
        ReportRow("conformality", surf.conformality_residual(),
                  _tol(cfg, "conformality"), grid, timer.lap()),
    ]
    for lam, name in ((2.0, "flatness@2"), (1j, "flatness@i"),
                      (2 + 1j, "flatness@2+i")):
        rows.append(ReportRow(name, curvature_residual(fam, lam),
                              _tol(cfg, name), grid, timer.lap()))
    wx, wy = fam.omega(1.0)
    rows.append(ReportRow("normalization@1",
                          max(float(np.max(np.abs(wx))),
                              float(np.max(np.abs(wy)))),
                          _tol(cfg, "normalization@1"), grid, timer.lap()))
    rows.append(ReportRow("reality@2+i", fam.reality_residual(2 + 1j),
                          _tol(cfg, "reality@2+i"), grid, timer.lap()))
    rows.append(ReportRow("cw_residual", mult.residual_cw,
                          _tol(cfg, "cw_residual"), grid, timer.lap()))
    rows.append(ReportRow("cw_closed", mult.residual_closed,
                          _tol(cfg, "cw_closed"), grid, timer.lap()))
    rows.append(ReportRow("willmore_energy", willmore_energy(nv),
                          float("inf"), grid, timer.lap()))
    return rows


def run_spectral(cfg: RunConfig, outdir: str) -> list:
    timer = _Timer()
    surf, csc, nv, mult, fam = _base_pipeline(cfg)
    grid = _grid_label(surf)
    mu = cfg.transform.mu
    defm = spectral_deform(fam, surf, mu, substeps=cfg.transform.substeps)
    rows = [ReportRow("gauge_residual", defm.triv.gauge_residual(fam),
                      _tol(cfg, "gauge_residual"), grid, timer.lap())]
    rows.append(ReportRow("deformed_nullity", defm.surface.nullity_residual(),
                          _tol(cfg, "deformed_nullity", 1e-9), grid,
                          timer.lap()))
    rows.append(ReportRow("deformed_conformality",
                          defm.surface.conformality_residual(),
                          _tol(cfg, "deformed_conformality", 1e-6), grid,
                          timer.lap()))
    write_cwsurf(os.path.join(outdir, cfg.report.surface_out), defm.surface)
    return rows


def run_backlund(cfg: RunConfig, outdir: str) -> list:
    timer = _Timer()
    surf, csc, nv, mult, fam = _base_pipeline(cfg)
    grid = _grid_label(surf)
    rng = np.random.default_rng(cfg.transform.seed)
    bg = backlund_gauge(fam, csc, cfg.transform.alpha, rng=rng,
                        substeps=cfg.transform.substeps)
    res = dress(fam, csc, mult.q10, bg)
    rows = [
        ReportRow("coverage_gap", 1.0 - res.coverage,
                  _tol(cfg, "coverage_gap"), grid, timer.lap()),
        ReportRow("lambda_isotropy",
                  plane_isotropy_residual(res.lam10, res.mask, fam.spec),
                  _tol(cfg, "lambda_isotropy"), grid, timer.lap()),
        ReportRow("gauge_reality", bg.reality_residual(0.7 + 0.3j),
                  _tol(cfg, "gauge_reality"), grid, timer.lap()),
        ReportRow("gauge_det", bg.det_residual(), _tol(cfg, "gauge_det"),
                  grid, timer.lap()),
    ]
    qhat, _ = quadratic_differential(split_connection(central_sphere(res.surface)),
                                     res.q10)
    qin, _ = quadratic_differential(nv, mult.q10)
    keep = res.mask & res.surface.spec.interior()
    scale = max(float(np.max(np.abs(qin))), 1e-6)
    dev = float(np.max(np.abs(qhat - mult.c)[keep])) / scale if np.any(keep) \
        else float("nan")
    rows.append(ReportRow("q_invariance", dev, _tol(cfg, "q_invariance"),
                          grid, timer.lap()))
    # transformed pair vs the input pair, both measured on a cut-open chart
    # with one-sided differences so the comparison is like for like
    nv_hat = split_connection(central_sphere(res.surface))
    _, cw_hat = cw_residual_pair(nv_hat, res.q10)
    cut = SurfaceGrid(surf.spec.cut_open(), surf.sigma, kind=surf.kind,
                      backend=g.FD2)
    nv_cut = split_connection(central_sphere(cut))
    _, cw_base = cw_residual_pair(nv_cut, fit_multiplier(nv_cut).q10)
    rows.append(ReportRow("cw_ratio", cw_hat / max(cw_base, 1e-30),
                          _tol(cfg, "cw_ratio"), grid, timer.lap()))
    write_cwsurf(os.path.join(outdir, cfg.report.surface_out), res.surface)
    return rows


def run_permute(cfg: RunConfig) -> list:
    timer = _Timer()
    surf, csc, nv, mult, fam = _base_pipeline(cfg)
    grid = _grid_label(surf)
    t = cfg.transform
    seed2 = t.seed2 if t.seed2 is not None else t.seed + 1
    bg1 = backlund_gauge(fam, csc, t.alpha, rng=np.random.default_rng(t.seed),
                         substeps=t.substeps)
    bg2 = backlund_gauge(fam, csc, t.alpha2,
                         rng=np.random.default_rng(seed2), substeps=t.substeps)
    res = permute(fam, csc, bg1, bg2)
    return [
        ReportRow("permutability", res.gauge_mismatch,
                  _tol(cfg, "permutability"), grid, timer.lap()),
        ReportRow("lambda12_agreement", res.surface_distance,
                  _tol(cfg, "lambda12_agreement"), grid, timer.lap()),
    ]


def run_darboux(cfg: RunConfig, outdir: str) -> list:
    timer = _Timer()
    surf, csc, nv, mult, fam = _base_pipeline(cfg)
    grid = _grid_label(surf)
    split = normal_split(csc)
    untw = untwist(fam, split)
    qd = to_quaternionic(split, mult.q10)
    params = riccati_params(cfg.transform.nu)
    x = integrate_x_riccati(untw.family, qd, params,
                            substeps=cfg.transform.substeps)
    x_alt = integrate_x_riccati(untw.family, qd, params,
                                substeps=cfg.transform.substeps, order="cols")
    rows = [
        ReportRow("riccati_drift", first_integral_drift(x, params, fam.spec),
                  _tol(cfg, "riccati_drift"), grid, timer.lap()),
        ReportRow("riccati_path_independence",
                  g.max_norm(x - x_alt, fam.spec, margin=0),
                  _tol(cfg, "riccati_path_independence"), grid, timer.lap()),
    ]
    result = darboux(qd, x)
    m6 = parallel_plane_line(qd, x, params)
    factor = UntwistedFactor(params.nu, m6)
    rows.append(ReportRow("lift_identity",
                          lift_residual(qd, x, factor.at_zero(),
                                        factor.at_inf(), params, result.mask),
                          _tol(cfg, "lift_identity"), grid, timer.lap()))
    sres = sphere_residuals(qd)
    rows.append(ReportRow("sphere_unit", sres["unit"],
                          _tol(cfg, "sphere_unit", 1e-10), grid, timer.lap()))
    write_cwsurf(os.path.join(outdir, cfg.report.surface_out), result.surface)
    return rows


# ---------------------------------------------------------------------------
# mesh export

def export_mesh(surf, mode: str, path: str) -> None:
    """Write the surface for plotting: points of the 4-sphere or a mesh of
    the stereographic image in 3-space."""
    sig = surf.sigma.real
    if mode == "s4_csv":
        t_comp = sig[..., 5]
        if np.any(np.abs(t_comp) < 1e-12):
            raise ValueError("lift not normalizable: vanishing timelike slot")
        v = sig / t_comp[..., None]
        pts = v[..., :5].reshape(-1, 5)
        with open(path, "w") as fh:
            for p in pts:
                fh.write(",".join("%.17g" % x for x in p) + "\n")
    elif mode == "stereo_obj":
        t_comp = sig[..., 5]
        v = sig / t_comp[..., None]
        s5 = v[..., :5]
        denom = 1.0 - s5[..., 4]
        ok = np.abs(denom) > 1e-9
        proj = np.zeros_like(s5[..., :4])
        proj[ok] = s5[ok][..., :4] / denom[ok][..., None]
        nx, ny = surf.spec.nx, surf.spec.ny
        with open(path, "w") as fh:
            for i in range(nx):
                for j in range(ny):
                    x, y, z = proj[i, j, 0], proj[i, j, 1], proj[i, j, 2]
                    fh.write("v %.17g %.17g %.17g\n" % (x, y, z))
            imax = nx if surf.spec.periodic_x else nx - 1
            jmax = ny if surf.spec.periodic_y else ny - 1
            okf = ok.reshape(nx, ny)
            for i in range(imax):
                for j in range(jmax):
                    ii, jj = (i + 1) % nx, (j + 1) % ny
                    if not (okf[i, j] and okf[ii, j] and okf[ii, jj]
                            and okf[i, jj]):
                        continue
                    a = i * ny + j + 1
                    b = ii * ny + j + 1
                    c = ii * ny + jj + 1
                    d = i * ny + jj + 1
                    fh.write(f"f {a} {b} {c} {d}\n")
    else:
        raise ValueError(f"unknown export mode {mode!r}")


def run_export(cfg: RunConfig, outdir: str) -> list:
    timer = _Timer()
    surf = _build_surface(cfg)
    path = os.path.join(outdir, cfg.report.export_out)
    export_mesh(surf, cfg.report.export_mode, path)
    return [ReportRow("export_points", 0.0, float("inf"),
                      _grid_label(surf), timer.lap())]


# ---------------------------------------------------------------------------
# entry point

PIPELINES = ("check", "spectral", "backlund", "darboux", "permute", "export")


def run(cfg: RunConfig, pipeline: str, outdir: str = ".") -> tuple[list, bool]:
    os.makedirs(outdir, exist_ok=True)
    if pipeline == "check":
        rows = run_check(cfg)
    elif pipeline == "spectral":
        rows = run_spectral(cfg, outdir)
    elif pipeline == "backlund":
        rows = run_backlund(cfg, outdir)
    elif pipeline == "darboux":
        rows = run_darboux(cfg, outdir)
    elif pipeline == "permute":
        rows = run_permute(cfg)
    elif pipeline == "export":
        rows = run_export(cfg, outdir)
    else:
        raise ConfigError(f"unknown pipeline {pipeline!r}")
    ok = all(r.passed for r in rows)
    return rows, ok


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cwdress",
        description="constrained Willmore surface toolkit")
    parser.add_argument("pipeline", choices=PIPELINES)
    parser.add_argument("--config", required=True)
    parser.add_argument("--grid", type=int, default=None,
                        help="override the grid to N x N")
    parser.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        print(f"cwdress: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"cwdress: {exc}", file=sys.stderr)
        return 2

    if args.grid is not None:
        cfg.surface.nx = cfg.surface.ny = args.grid
    env_seed = os.environ.get("CWDRESS_SEED")
    if env_seed is not None:
        cfg.transform.seed = int(env_seed)

    try:
        rows, ok = run(cfg, args.pipeline, args.out)
    except ConfigError as exc:
        print(f"cwdress: {exc}", file=sys.stderr)
        return 2

    text = format_report(rows)
    report_path = os.path.join(args.out, cfg.report.out)
    with open(report_path, "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
