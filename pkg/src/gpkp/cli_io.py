"""Command-line front end: configuration, result files and figures.

Exit codes: 0 success, 1 configuration or input error, 2 solver failure,
3 sweep with some failed cases.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, fields
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import gp_solver, kp_solver, transonic
from .spectral_core import ComplexField2, Grid2, RealField2, dump_field, load_field

log = logging.getLogger("gpkp")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PARTIAL = 0, 1, 2, 3

COMMANDS = ("kp-solve", "gp-min", "gp-1d-oracle", "rescale", "sweep", "kernel-norms", "figures")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    out: str = "out"
    grid: tuple = (256, 256)
    box: tuple = (60.0, 60.0)
    tol: float = 1e-10
    max_iter: int = 300
    eps: tuple = ()
    p: Optional[float] = None
    seed_field: Optional[str] = None
    seed_scale: float = 0.8
    dealias: bool = True
    workers: int = 1
    specs: tuple = ((0, 2), (1, 1), (2, 0))
    alphas: tuple = (0.0,)
    report: Optional[str] = None
    fields_dir: Optional[str] = None
    dump_fields: bool = True

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if len(self.grid) != 2 or len(self.box) != 2:
            raise ConfigError("grid and box need two entries")
        try:
            Grid2(int(self.grid[0]), int(self.grid[1]), float(self.box[0]), float(self.box[1]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid/box: {exc}") from None
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be >= 1")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        for e in self.eps:
            if not 0 < e < math.sqrt(2.0):
                raise ConfigError(f"eps values must lie in (0, sqrt 2), got {e}")
        if self.p is not None and self.p < 0:
            raise ConfigError("p must be non-negative")
        for s in self.specs:
            if len(s) != 2:
                raise ConfigError(f"kernel spec {s!r} must be a pair (i, j)")
        return self

    @property
    def grid2(self) -> Grid2:
        return Grid2(int(self.grid[0]), int(self.grid[1]), float(self.box[0]), float(self.box[1]))


def _coerce(key: str, value):
    if key in ("grid",):
        return tuple(int(v) for v in value)
    if key in ("box", "eps", "alphas"):
        if isinstance(value, (int, float)):
            value = [value]
        return tuple(float(v) for v in value)
    if key == "specs":
        return tuple(tuple(int(a) for a in s) for s in value)
    if key in ("tol", "seed_scale") or (key == "p" and value is not None):
        return float(value)
    if key in ("max_iter", "workers"):
        return int(value)
    if key in ("dealias", "dump_fields"):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean")
        return value
    return value


def load_config(path: Optional[str], command: str, overrides: dict) -> RunConfig:
    """Read a YAML mapping, reject unknown keys and apply flag overrides (flags win)."""
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
        data.update(raw)
    data.update({k: v for k, v in overrides.items() if v is not None})
    data.setdefault("command", command)
    if data["command"] != command:
        raise ConfigError(f"config is for {data['command']!r}, not {command!r}")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        kw = {k: _coerce(k, v) for k, v in data.items()}
        return RunConfig(**kw).validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config: {exc}") from None


# ------------------------------------------------------------------ output

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def write_json(path: Path, obj) -> None:
    # json emits floats with repr, the shortest string that round-trips exactly.
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([transonic.format_number(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in r])


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for name in ("numpy", "scipy", "numba", "matplotlib", "pyyaml", "artifact"):
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    return out


class Run:
    """Output directory with a manifest written before any result."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.t0 = time.perf_counter()
        self.manifest = {
            "config": asdict(cfg), "versions": _versions(),
            "numba_kernels": _numba_state(), "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "wall_time": None, "status": "running",
        }
        write_json(self.out / "manifest.json", self.manifest)

    def finish(self, status: str, code: int) -> int:
        self.manifest["wall_time"] = time.perf_counter() - self.t0
        self.manifest["status"] = status
        self.manifest["exit_code"] = code
        write_json(self.out / "manifest.json", self.manifest)
        return code


def _numba_state() -> bool:
    from . import _kernels

    return _kernels.USE_NUMBA


# ---------------------------------------------------------------- commands

def cmd_kp_solve(cfg: RunConfig) -> int:
    run = Run(cfg)
    grid = cfg.grid2
    try:
        if cfg.seed_field:
            seed = load_field(cfg.seed_field)
            if not isinstance(seed, RealField2):
                raise ConfigError("kp-solve seed must be a real field")
        else:
            seed = kp_solver.lump(grid) * cfg.seed_scale
    except (OSError, ValueError) as exc:
        log.error("seed: %s", exc)
        return run.finish(f"seed error: {exc}", EXIT_CONFIG)
    try:
        st = kp_solver.petviashvili_solve(seed, tol=cfg.tol, max_iter=cfg.max_iter, dealias=cfg.dealias)
    except (kp_solver.NotConvergedError, kp_solver.IterationDivergedError) as exc:
        log.error("petviashvili: %s", exc)
        return run.finish(f"solver failure: {exc}", EXIT_SOLVER)
    dump_field(run.out / "w.twf", st.w)
    summary = st.summary()
    try:
        est = kp_solver.s_kp_estimate(st)
        summary["s_kp"] = est.value
        summary["s_kp_cross_check"] = est.cross_check
    except kp_solver.UnconvergedStateError:
        summary["s_kp"] = None
    write_json(run.out / "summary.json", summary)
    write_csv(run.out / "history.csv", ["iter", "M", "residual", "change"], st.history)
    log.info("kp-solve converged: residual %.3e in %d iterations", st.residual_l2, st.iterations)
    return run.finish("ok", EXIT_OK)


def cmd_gp_min(cfg: RunConfig) -> int:
    run = Run(cfg)
    grid = cfg.grid2
    eps0 = cfg.eps[0] if cfg.eps else None
    if cfg.p is None and eps0 is None:
        return run.finish("config error: need p or eps", EXIT_CONFIG)
    try:
        p = cfg.p if cfg.p is not None else gp_solver.momentum_values(
            grid, gp_solver.initial_guess(1.0, grid, eps0))
        params = gp_solver.MinimizeParams(
            max_iter=cfg.max_iter, grad_tol=cfg.tol, init_eps=eps0, init_field=cfg.seed_field,
            dealias=cfg.dealias, trace_path=run.out / "trace.csv")
        st = gp_solver.minimize_fixed_momentum(p, grid, params)
    except (gp_solver.LiftingError, gp_solver.StagnationError, gp_solver.MinimizationError) as exc:
        log.error("gp-min: %s", exc)
        return run.finish(f"solver failure: {exc}", EXIT_SOLVER)
    except (OSError, ValueError) as exc:
        log.error("gp-min input: %s", exc)
        return run.finish(f"input error: {exc}", EXIT_CONFIG)
    dump_field(run.out / "u.twc", st.u)
    summary = st.summary()
    summary["pohozaev"] = gp_solver.pohozaev_diagnostics(st).as_dict()
    if st.lifted is not None and not st.trivial:
        summary["polar_residuals"] = list(gp_solver.polar_residuals(*st.lifted, st.c))
    write_json(run.out / "summary.json", summary)
    return run.finish("ok", EXIT_OK)


def cmd_gp_1d_oracle(cfg: RunConfig) -> int:
    run = Run(cfg)
    eps_list = cfg.eps or (0.2, 0.4, 0.6)
    rows = []
    for e in eps_list:
        c = math.sqrt(2.0 - e * e)
        try:
            tw = gp_solver.solve_tw_1d(c, n=int(cfg.grid[0]), L=float(cfg.box[0]) / e)
        except gp_solver.MinimizationError as exc:
            log.error("1-D solve at eps=%g: %s", e, exc)
            return run.finish(f"solver failure: {exc}", EXIT_SOLVER)
        X, N, dT = gp_solver.rescale_1d(tw)
        No, dTp = gp_solver.oracle_1d(e, X)
        _, dTx = gp_solver.oracle_1d_exact(e, X)
        rows.append((e, c, float(np.abs(N - No).max()), float(np.abs(dT - dTp).max()),
                     float(np.abs(dT - dTx).max()), tw.residual))
        np.savetxt(run.out / f"profile_eps{e:g}.csv", np.column_stack([X, N, dT, No, dTp, dTx]),
                   delimiter=",", fmt="%.17g", header="X,N,dTheta,N_closed,dTheta_printed,dTheta_exact",
                   comments="")
    hdr = ["eps", "c", "err_N", "err_dTheta_printed", "err_dTheta_exact", "newton_residual"]
    write_csv(run.out / "oracle_1d.csv", hdr, rows)
    write_json(run.out / "summary.json", [dict(zip(hdr, r)) for r in rows])
    return run.finish("ok", EXIT_OK)


def cmd_rescale(cfg: RunConfig) -> int:
    run = Run(cfg)
    if not cfg.seed_field or not cfg.eps:
        return run.finish("config error: rescale needs seed_field and eps", EXIT_CONFIG)
    try:
        u = load_field(cfg.seed_field)
        if not isinstance(u, ComplexField2):
            raise ConfigError("rescale needs a complex field")
        sp = transonic.rescale(u, cfg.eps[0])
    except gp_solver.LiftingError as exc:
        return run.finish(f"lifting failure: {exc}", EXIT_SOLVER)
    except (OSError, ValueError) as exc:
        return run.finish(f"input error: {exc}", EXIT_CONFIG)
    dump_field(run.out / "N.twf", sp.N)
    dump_field(run.out / "Theta.twf", sp.Theta)
    summary = sp.summary()
    summary["residual_slow1"] = transonic.residual_slow1(sp, dealias=cfg.dealias)
    summary["residual_slow2"] = transonic.residual_slow2(sp, dealias=cfg.dealias)
    write_json(run.out / "summary.json", summary)
    return run.finish("ok", EXIT_OK)


def cmd_sweep(cfg: RunConfig) -> int:
    run = Run(cfg)
    if not cfg.eps:
        log.error("sweep: empty eps list")
        return run.finish("config error: empty eps list", EXIT_CONFIG)
    scfg = transonic.SweepConfig(
        n1=int(cfg.grid[0]), n2=int(cfg.grid[1]), L1=float(cfg.box[0]), L2=float(cfg.box[1]),
        tol=cfg.tol, max_iter=cfg.max_iter, dealias=cfg.dealias, workers=cfg.workers,
        dump_dir=str(run.out / "fields") if cfg.dump_fields else None)
    try:
        rep = transonic.sweep(sorted(cfg.eps, reverse=True), scfg)
    except (kp_solver.NotConvergedError, kp_solver.IterationDivergedError) as exc:
        return run.finish(f"reference ground state failed: {exc}", EXIT_SOLVER)
    rep.write(run.out)
    status = [(e, "ok" if e not in rep.failures else rep.failures[e]) for e in cfg.eps]
    write_csv(run.out / "status.csv", ["eps", "status"], status)
    for e, s in status:
        log.info("eps=%-6g %s", e, s)
    if rep.failures and rep.rows:
        return run.finish("partial failure", EXIT_PARTIAL)
    if rep.failures:
        return run.finish("all cases failed", EXIT_SOLVER)
    return run.finish("ok", EXIT_OK)


def kernel_norm_table(specs, eps_list, alphas, rtol: float = 1e-8):
    """Norm rows (i, j, alpha, eps, norm, abs_err) and fitted eps exponents."""
    rows, fits = [], []
    for (i, j) in specs:
        for a in alphas:
            vals = []
            for e in eps_list:
                kn = kp_solver.kernel_norm(kp_solver.KernelSpec(i, j, e), a, rtol=rtol)
                rows.append((i, j, a, e, kn.value, kn.abs_error))
                vals.append(kn.value)
            fits.append((i, j, a, kp_solver.fit_slope(eps_list, vals), min(eps_list), max(eps_list)))
    return rows, fits


def cmd_kernel_norms(cfg: RunConfig) -> int:
    run = Run(cfg)
    if not cfg.specs:
        return run.finish("config error: empty spec list", EXIT_CONFIG)
    eps_list = cfg.eps or (0.05, 0.1, 0.2, 0.4)
    try:
        rows, fits = kernel_norm_table(cfg.specs, eps_list, cfg.alphas)
    except kp_solver.DivergentIntegralError as exc:
        return run.finish(f"divergent norm: {exc}", EXIT_CONFIG)
    except ValueError as exc:
        return run.finish(f"config error: {exc}", EXIT_CONFIG)
    write_csv(run.out / "kernel_norms.csv", ["i", "j", "alpha", "eps", "norm", "abs_error"], rows)
    write_csv(run.out / "kernel_fits.csv", ["i", "j", "alpha", "slope", "eps_min", "eps_max"], fits)
    write_json(run.out / "summary.json",
               [dict(zip(["i", "j", "alpha", "slope", "eps_min", "eps_max"], f)) for f in fits])
    return run.finish("ok", EXIT_OK)


def emit_figures(report: str | Path, out_dir: str | Path, fields_dir: Optional[str | Path] = None) -> list[Path]:
    """Heatmaps of the dumped fields and log-log convergence plots of a sweep report."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report = Path(report)
    if not report.is_file():
        raise FileNotFoundError(f"report {report} not found")
    data = json.loads(report.read_text())
    rows = data.get("rows")
    if not isinstance(rows, list):
        raise ValueError("report has no rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if rows:
        eps = np.array([r["eps"] for r in rows])
        fig, ax = plt.subplots(figsize=(5, 4))
        for key, lab in (("dist_N_dTheta", r"$\|N-\partial_1\Theta\|$"),
                         ("dist_N_N0", r"$\|N-N_0\|$"), ("dist_dTheta_N0", r"$\|\partial_1\Theta-N_0\|$")):
            ax.loglog(eps, [r[key] for r in rows], "o-", label=lab)
        ax.set_xlabel(r"$\varepsilon$")
        ax.legend()
        fig.tight_layout()
        p = out / "convergence.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        files.append(p)
    fdir = Path(fields_dir) if fields_dir is not None else report.parent / "fields"
    if fdir.is_dir():
        for fpath in sorted(fdir.glob("*.twf")):
            f = load_field(fpath)
            files.append(heatmap(f, out / (fpath.stem + ".png"), fpath.stem))
    return files


def heatmap(f: RealField2, path: Path, title: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    g = f.grid
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(np.asarray(f.values).T, origin="lower", cmap="viridis",
                   extent=(-g.L1, g.L1, -g.L2, g.L2), aspect="auto")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def cmd_figures(cfg: RunConfig) -> int:
    run = Run(cfg)
    if not cfg.report:
        return run.finish("config error: figures needs report", EXIT_CONFIG)
    try:
        files = emit_figures(cfg.report, run.out, cfg.fields_dir)
    except (OSError, ValueError, KeyError) as exc:
        log.error("figures: %s", exc)
        return run.finish(f"input error: {exc}", EXIT_CONFIG)
    write_json(run.out / "figures.json", [str(p) for p in files])
    return run.finish("ok", EXIT_OK)


HANDLERS = {
    "kp-solve": cmd_kp_solve, "gp-min": cmd_gp_min, "gp-1d-oracle": cmd_gp_1d_oracle,
    "rescale": cmd_rescale, "sweep": cmd_sweep, "kernel-norms": cmd_kernel_norms,
    "figures": cmd_figures,
}


# ------------------------------------------------------------------ parser

def _pair(cast):
    def parse(s: str):
        parts = s.lower().split("x")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected AxB, got {s!r}")
        try:
            return [cast(p) for p in parts]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected AxB, got {s!r}") from None
    return parse


def _float_list(s: str):
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpkp", description="KP solitary waves and transonic GP travelling waves.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--eps", type=_float_list, help="comma-separated eps values")
        sp.add_argument("--grid", type=_pair(int), help="N1xN2")
        sp.add_argument("--box", type=_pair(float), help="L1xL2 half-periods")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", type=int, dest="max_iter")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--no-dealias", action="store_const", const=False, dest="dealias")
        sp.add_argument("--seed-field", dest="seed_field", help="field dump used as initial state")
        if name == "gp-min":
            sp.add_argument("--p", type=float, help="target momentum")
        if name == "figures":
            sp.add_argument("--report", help="convergence.json from a sweep")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("TW_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    ov = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = load_config(args.config, args.command, ov)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return HANDLERS[cfg.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
