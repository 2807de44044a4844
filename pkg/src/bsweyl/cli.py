"""Command-line entry point.

Every run resolves a strict ExperimentConfig, writes a manifest echoing
the full configuration plus library versions, and emits plot-ready CSV
and JSON artifacts.  Exit status: 0 when all checks in the run pass,
1 when a check fails, 2 on configuration errors (every violation is
listed at once).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy

from . import __version__
from .audit import audit
from .density import (ComplexWindow, action_map_integrable,
                      ellipticity_margin_check, omega_density,
                      preimage_volume, weyl_density)
from .experiments import (DeformationSplitsConfig, IntegrableEqualityConfig,
                          RandomWeylMigrationConfig, run_deformation_splits,
                          run_integrable_equality, run_random_weyl_migration)
from .flow import Deformation, DeformedSymbol, deformed_quadratic, load_deformation
from .quantize import (BasisSpec, BSLattice, bs_predict, count_and_compare,
                       perturb, quantize_quadratic, quantize_torus, spectrum)
from .symbols import SymbolJSONError, load_symbol, torus_linear
from .variation import (TestFunction, VariationReport, first_variation_rhs,
                        moment_derivative_fd, second_variation_rhs)

ENV_OUTDIR = "BSWEYL_OUTDIR"

EXPERIMENTS = ("audit", "density", "deform-density", "variation", "spectrum",
               "bs", "count", "integrable-equality", "deformation-splits",
               "random-weyl-migration")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class ExperimentConfig:
    """Strict run configuration; unknown fields are rejected."""

    experiment: str
    symbol: object = None            # builtin name or symbol JSON object
    deformation: object = None       # deformation JSON object
    # None means "use this experiment's documented default"
    t: float = None
    window: object = None            # {"center": [re, im], "half_widths": [..], "resolution": [..]}
    h: float = None
    delta: float = None
    seeds: list = None
    samples: int = None
    quadrature_order: int = None
    box_radius: float = 4.0
    basis_size: int = None
    basis_kind: str = "hermite-tensor"
    sampler: str = "halton"
    order: int = 1                   # variation order (1 or 2)
    f_center: list = field(default_factory=lambda: [0.05, 0.55])
    f_radius: float = 0.35
    theta0: list = field(default_factory=lambda: [0.5, 0.5])
    I0: list = field(default_factory=lambda: [0.0, 0.0])
    eta_box: list = field(default_factory=lambda: [[-0.6, 0.6], [-0.6, 0.6]])
    coupling: float = 0.3
    outdir: str = None

    @classmethod
    def from_dict(cls, d):
        errors = []
        if not isinstance(d, dict):
            raise ConfigError(["config must be a JSON object"])
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                errors.append(f"unknown field {k!r}")
        exp = d.get("experiment")
        if exp not in EXPERIMENTS:
            errors.append(f"'experiment' must be one of {EXPERIMENTS}, got {exp!r}")
        checks = [
            ("t", (int, float), None), ("h", (int, float), lambda v: 0 < v <= 1),
            ("delta", (int, float), lambda v: v >= 0),
            ("samples", int, lambda v: v > 0),
            ("quadrature_order", int, lambda v: v >= 8),
            ("box_radius", (int, float), lambda v: v > 0),
            ("basis_size", int, lambda v: v >= 1),
            ("f_radius", (int, float), lambda v: v > 0),
            ("coupling", (int, float), None),
            ("order", int, lambda v: v in (1, 2)),
        ]
        for name, types, pred in checks:
            if name in d and d[name] is not None:
                v = d[name]
                if not isinstance(v, types) or isinstance(v, bool):
                    errors.append(f"{name!r} must be of type {types}")
                elif pred is not None and not pred(v):
                    errors.append(f"{name!r} value {v!r} out of range")
        if "seeds" in d and d["seeds"] is not None and (
                not isinstance(d["seeds"], list)
                or not all(isinstance(s, int) for s in d["seeds"])):
            errors.append("'seeds' must be a list of integers")
        if "sampler" in d and d["sampler"] not in ("halton", "random"):
            errors.append("'sampler' must be 'halton' or 'random'")
        if "basis_kind" in d and d["basis_kind"] not in ("hermite-tensor", "torus-fourier"):
            errors.append("'basis_kind' must be 'hermite-tensor' or 'torus-fourier'")
        if errors:
            raise ConfigError(errors)
        return cls(**d)

    def resolve_window(self, default=None, resolution=(64, 64)):
        w = self.window
        if w is None:
            if default is None:
                raise ConfigError(["this experiment needs a 'window'"])
            return default
        errors = []
        if not isinstance(w, dict):
            raise ConfigError(["'window' must be an object"])
        for k in w:
            if k not in {"center", "half_widths", "resolution"}:
                errors.append(f"window: unknown field {k!r}")
        try:
            center = complex(w["center"][0], w["center"][1])
            hw = (float(w["half_widths"][0]), float(w["half_widths"][1]))
            res = tuple(w.get("resolution", resolution))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            errors.append(f"window: {exc}")
            raise ConfigError(errors) from exc
        if errors:
            raise ConfigError(errors)
        return ComplexWindow(center, hw, res)


def _manifest(outdir, config_dict, report):
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "config": config_dict,
        "versions": {"bsweyl": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
        "pass": report.get("pass", True),
        "report": report,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def _run_config(cfg: ExperimentConfig):
    """Dispatch a resolved config; returns (report dict, artifacts writer ran)."""
    outdir = cfg.outdir or os.environ.get(ENV_OUTDIR) or f"out-{cfg.experiment}"
    exp = cfg.experiment

    if exp == "audit":
        p = load_symbol(cfg.symbol or "cho(1,(1+i)/2)")
        rep_obj = audit(p, sample_budget=min(cfg.samples or 4096, 4096),
                        ball_radius=cfg.box_radius, seed=(cfg.seeds or [0])[0])
        report = json.loads(rep_obj.to_json())
        report["experiment"] = "audit"
        report["pass"] = rep_obj.ellipticity_flag != "fail"
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "audit.json"), "w") as fh:
            fh.write(rep_obj.to_json())
    elif exp in ("density", "deform-density"):
        win = cfg.resolve_window()
        p = load_symbol(cfg.symbol or "cho(1,(1+i)/2)")
        if exp == "deform-density":
            d = load_deformation(cfg.deformation) if cfg.deformation else None
            if d is None:
                raise ConfigError(["deform-density needs a 'deformation'"])
            p = DeformedSymbol(p, d, cfg.t or 0.0)
        margin_ok, margin = ellipticity_margin_check(
            p, win, cfg.box_radius, seed=(cfg.seeds or [0])[0])
        grid = weyl_density(p, win, box_radius=cfg.box_radius,
                            samples=cfg.samples or 10_000_000,
                            seed=(cfg.seeds or [0])[0], sampler=cfg.sampler)
        os.makedirs(outdir, exist_ok=True)
        grid.write_csv(os.path.join(outdir, "density.csv"))
        grid.write_meta(os.path.join(outdir, "density_meta.json"))
        report = {"experiment": exp, "pass": True,
                  "total_mass": grid.total_mass, "method": grid.method,
                  "boundary_margin_ok": bool(margin_ok),
                  "boundary_margin": margin}
    elif exp == "variation":
        p = load_symbol(cfg.symbol or "cho(1,0)")
        if cfg.deformation is None:
            raise ConfigError(["variation needs a 'deformation'"])
        d = load_deformation(cfg.deformation)
        G = d.generators[0]
        f = TestFunction(complex(cfg.f_center[0], cfg.f_center[1]), cfg.f_radius)

        def make_pt(t):
            return deformed_quadratic(DeformedSymbol(p, d, t))

        t = cfg.t or 0.0
        order = cfg.quadrature_order or 48
        if cfg.order == 1:
            rhs = first_variation_rhs(f, make_pt(t), G, cfg.box_radius, order)
            lhs = moment_derivative_fd(make_pt, t, 1, f=f,
                                       box_radius=cfg.box_radius,
                                       quad_order=order)
            rep = VariationReport.build(lhs, rhs, "first", t)
        else:
            rhs = second_variation_rhs(f, p, G, cfg.box_radius, order)
            lhs = moment_derivative_fd(make_pt, 0.0, 2, f=f,
                                       box_radius=cfg.box_radius,
                                       quad_order=order)
            rep = VariationReport.build(lhs, rhs, "second", 0.0)
        report = {"experiment": "variation", "pass": True, **asdict(rep)}
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "variation.json"), "w") as fh:
            fh.write(rep.to_json())
    elif exp in ("spectrum", "bs", "count"):
        report = _run_spectral(cfg, outdir)
    elif exp == "integrable-equality":
        ie = IntegrableEqualityConfig(coupling=cfg.coupling,
                                      seed=(cfg.seeds or [5])[0],
                                      sampler=cfg.sampler)
        if cfg.samples is not None:
            ie.samples = cfg.samples
        if cfg.eta_box is not None:
            ie.eta_box = tuple(tuple(b) for b in cfg.eta_box)
        if cfg.window is not None:
            win = cfg.resolve_window()
            lo_r, hi_r, lo_i, hi_i = win.bounds
            ie.window = (lo_r, hi_r, lo_i, hi_i)
            ie.resolution = win.resolution
        report, _, _ = run_integrable_equality(ie, outdir)
    elif exp == "deformation-splits":
        ds = DeformationSplitsConfig(
            f_center=complex(cfg.f_center[0], cfg.f_center[1]),
            f_radius=cfg.f_radius)
        if cfg.t is not None:
            ds.t = cfg.t
        if cfg.quadrature_order is not None:
            ds.quadrature_order = cfg.quadrature_order
        report = run_deformation_splits(ds, outdir)
    elif exp == "random-weyl-migration":
        mg = RandomWeylMigrationConfig()
        for name in ("t", "h", "delta", "basis_size"):
            v = getattr(cfg, name)
            if v is not None:
                setattr(mg, name, v)
        if cfg.seeds is not None:
            mg.seeds = tuple(cfg.seeds)
        if cfg.window is not None:
            win = cfg.resolve_window()
            mg.window = win.bounds
        report = run_random_weyl_migration(mg, outdir)
    else:  # pragma: no cover - guarded by validation
        raise ConfigError([f"unhandled experiment {exp!r}"])

    _manifest(outdir, _config_dict(cfg), report)
    return report


def _run_spectral(cfg: ExperimentConfig, outdir):
    p = load_symbol(cfg.symbol or "cho(1,0)")
    if cfg.deformation is not None:
        d = load_deformation(cfg.deformation)
        p = deformed_quadratic(DeformedSymbol(p, d, cfg.t or 0.0))
    basis = BasisSpec(cfg.basis_kind, cfg.basis_size or 40, cfg.h or 0.1)
    if cfg.basis_kind == "hermite-tensor":
        P = quantize_quadratic(p, basis)
    else:
        P = quantize_torus(p, basis)
    if cfg.delta:
        P = perturb(P, cfg.delta, (cfg.seeds or [0])[0])
    os.makedirs(outdir, exist_ok=True)
    if cfg.experiment == "spectrum":
        s = spectrum(P, delta=cfg.delta or 0.0,
                     seed=(cfg.seeds or [0])[0] if cfg.delta else None)
        s.write_csv(os.path.join(outdir, "spectrum.csv"))
        s.write_meta(os.path.join(outdir, "spectrum_meta.json"))
        return {"experiment": "spectrum", "pass": True,
                "count": int(s.eigenvalues.size),
                "residual_bound": s.residual_bound}
    if cfg.experiment == "bs":
        win = cfg.resolve_window()
        am = action_map_integrable(torus_linear(), I0=tuple(cfg.I0))
        lat = BSLattice(am, cfg.h or 0.1, win, theta0=tuple(cfg.theta0))
        pts, unresolved = bs_predict(lat)
        with open(os.path.join(outdir, "bs_lattice.csv"), "w") as fh:
            fh.write("re,im\n")
            for z in pts:
                fh.write(f"{z.real:.17g},{z.imag:.17g}\n")
        return {"experiment": "bs", "pass": not unresolved,
                "n_points": int(pts.size), "unresolved": len(unresolved)}
    # count
    win = cfg.resolve_window()
    s = spectrum(P, delta=cfg.delta or 0.0,
                 seed=(cfg.seeds or [0])[0] if cfg.delta else None)
    am = action_map_integrable(torus_linear(), I0=tuple(cfg.I0))
    o_grid = omega_density(am, win)
    vol, _ = preimage_volume(p, win, box_radius=cfg.box_radius,
                             samples=cfg.samples or 10_000_000,
                             seed=(cfg.seeds or [0])[0])
    rep = count_and_compare(s, win, omega_grid=o_grid, weyl_volume=vol)
    with open(os.path.join(outdir, "count.json"), "w") as fh:
        fh.write(rep.to_json())
    return {"experiment": "count", "pass": True, **json.loads(rep.to_json())}


def _config_dict(cfg: ExperimentConfig):
    return asdict(cfg)


def _add_common(sp):
    sp.add_argument("--symbol", help="builtin name (e.g. 'cho(1,(1+i)/2)') or symbol JSON file")
    sp.add_argument("--G", help="generator: builtin name or symbol JSON file")
    sp.add_argument("--t", type=float, default=None, help="deformation parameter")
    sp.add_argument("--window", help="window JSON file or inline JSON")
    sp.add_argument("--h", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--seeds", type=int, default=None,
                    help="number of seeds, run as 0..N-1")
    sp.add_argument("--seed", type=int, default=None,
                    help="single seed (overrides --seeds)")
    sp.add_argument("--seed-list", type=int, nargs="+", default=None,
                    help="explicit seed list (overrides both)")
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--order", type=int, default=1, choices=(1, 2),
                    help="variation order")
    sp.add_argument("--quadrature-order", type=int, default=None)
    sp.add_argument("--box-radius", type=float, default=4.0)
    sp.add_argument("--basis-size", type=int, default=None)
    sp.add_argument("--basis-kind", default="hermite-tensor",
                    choices=("hermite-tensor", "torus-fourier"))
    sp.add_argument("--sampler", default="halton", choices=("halton", "random"))
    sp.add_argument("--f-center", type=float, nargs=2, default=[0.05, 0.55])
    sp.add_argument("--f-radius", type=float, default=0.35)
    sp.add_argument("--coupling", type=float, default=0.3)
    sp.add_argument("--outdir", default=None)


def _load_maybe_file(text):
    if text is None:
        return None
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    s = text.strip()
    if s.startswith("{"):
        return json.loads(s)
    return text  # builtin name


def _args_to_config(exp, args):
    d = {"experiment": exp}
    sym = _load_maybe_file(getattr(args, "symbol", None))
    if sym is not None:
        d["symbol"] = sym
    G = _load_maybe_file(getattr(args, "G", None))
    if G is not None:
        d["deformation"] = {"G": G}
    win = _load_maybe_file(getattr(args, "window", None))
    if isinstance(win, dict):
        d["window"] = win
    if getattr(args, "seed_list", None) is not None:
        d["seeds"] = list(args.seed_list)
    elif getattr(args, "seed", None) is not None:
        d["seeds"] = [args.seed]
    elif getattr(args, "seeds", None) is not None:
        d["seeds"] = list(range(args.seeds))
    for name, key in (("t", "t"), ("h", "h"), ("delta", "delta"),
                      ("samples", "samples"),
                      ("order", "order"),
                      ("quadrature_order", "quadrature_order"),
                      ("box_radius", "box_radius"),
                      ("basis_size", "basis_size"),
                      ("basis_kind", "basis_kind"), ("sampler", "sampler"),
                      ("f_radius", "f_radius"), ("coupling", "coupling"),
                      ("outdir", "outdir")):
        if hasattr(args, name):
            v = getattr(args, name)
            if v is not None:
                d[key] = v
    if hasattr(args, "f_center"):
        d["f_center"] = list(args.f_center)
    return ExperimentConfig.from_dict(d)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bsweyl",
        description="Action density vs Weyl density experiments for "
                    "non-self-adjoint semiclassical models")
    sub = parser.add_subparsers(dest="command", required=True)

    for exp in EXPERIMENTS:
        sp = sub.add_parser(exp, help=f"run the {exp} experiment")
        _add_common(sp)

    spe = sub.add_parser("experiment", help="run a named experiment")
    spe.add_argument("name", choices=EXPERIMENTS)
    _add_common(spe)

    spr = sub.add_parser("run", help="run from a config (or manifest) JSON file")
    spr.add_argument("--config", required=True)

    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            try:
                with open(args.config) as fh:
                    raw = json.load(fh)
            except json.JSONDecodeError as exc:
                print(f"config error: invalid JSON at line {exc.lineno} "
                      f"col {exc.colno}: {exc.msg}", file=sys.stderr)
                return 2
            except OSError as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return 2
            if isinstance(raw, dict) and "config" in raw and "experiment" not in raw:
                raw = raw["config"]  # re-run from a manifest
                raw = {k: v for k, v in raw.items() if v is not None}
            cfg = ExperimentConfig.from_dict(raw)
        elif args.command == "experiment":
            cfg = _args_to_config(args.name, args)
        else:
            cfg = _args_to_config(args.command, args)
    except (ConfigError, SymbolJSONError) as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON at line {exc.lineno} "
              f"col {exc.colno}: {exc.msg}", file=sys.stderr)
        return 2

    try:
        report = _run_config(cfg)
    except (ConfigError, SymbolJSONError) as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    print(json.dumps(report, indent=2))
    return 0 if report.get("pass", True) else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
