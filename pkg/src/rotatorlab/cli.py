"""Command-line front end.

Each command writes its data (CSV or JSON) into ``--out`` and, with
``--svg``, a rendered figure next to it. A short delimited summary goes to
stdout. Exit status: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bifurcation as bif
from .equilibria import EqClass, find_equilibria, write_csv
from .integrate import IntegrationError
from .model import (REVERSAL, REVERSAL_2, TWO_PI, RotatorSystem, case_i, case_ii, harmonic,
                    random_points, reversibility_residual, sinusoidal)
from .orbits import (FIG9_SIGNS, BurstParams, EscapedToSink, NoConvergence, NoSpikes, scan_epsilon)
from .portrait import (ClassifyConfig, NoApproach, NoSignChange, compute_separatrices,
                       region_map)

COMMANDS = ("symmetry-check", "equilibria", "portrait", "regions", "bifdiag", "connect",
            "burst-scan")
PRESETS = {
    "caseI": ("omega", "a", "kappa"),
    "caseII": ("omega", "a", "kappa"),
    "sinusoidal": ("omega1", "omega2", "a1", "a2", "kappa1", "kappa2", "alpha"),
    "harmonic": ("omega", "p", "n", "kappa", "r", "m"),
    "fourier": (),
}
DEFAULTS = {"omega": 1.0, "a": 1.0, "kappa": 0.5, "omega1": 1.0, "omega2": 1.0, "a1": 1.0,
            "a2": 1.0, "kappa1": 0.5, "kappa2": -0.5, "alpha": 0.0, "p": 1.0, "n": 2,
            "r": 0.0, "m": 1}
NUMERICAL_ERRORS = (IntegrationError, NoConvergence, EscapedToSink, NoSpikes, NoApproach,
                    NoSignChange, bif.SeedNotBracketing, FloatingPointError)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str = "equilibria"
    preset: str = "caseI"
    params: dict = field(default_factory=dict)
    system: dict | None = None  # explicit Fourier coefficients for the "fourier" preset
    grid: int | None = None
    tmax: float | None = None
    rtol: float = 1e-10
    atol: float = 1e-12
    svg: bool = False
    out: str = "."
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        allowed = set(PRESETS[self.preset])
        unknown = set(self.params) - allowed
        if unknown:
            raise ConfigError(f"parameters {sorted(unknown)} do not belong to preset {self.preset}")
        if self.preset == "fourier" and self.system is None:
            raise ConfigError("the fourier preset needs a 'system' block")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def build_system(self) -> RotatorSystem:
        if self.preset == "fourier":
            try:
                return RotatorSystem.from_dict(self.system)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        p = {k: self.params.get(k, DEFAULTS[k]) for k in PRESETS[self.preset]}
        if self.preset == "caseI":
            return case_i(p["omega"], p["a"], p["kappa"])
        if self.preset == "caseII":
            return case_ii(p["omega"], p["a"], p["kappa"])
        if self.preset == "sinusoidal":
            return sinusoidal(p["omega1"], p["omega2"], p["a1"], p["a2"], p["kappa1"],
                              p["kappa2"], p["alpha"])
        if int(p["n"]) != p["n"] or int(p["m"]) != p["m"] or p["n"] < 1 or p["m"] < 1:
            raise ConfigError("harmonic orders n and m must be positive integers")
        return harmonic(p["omega"], p["p"], int(p["n"]), p["kappa"], p["r"], int(p["m"]))


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------

PARAM_FLAGS = ("omega", "omega1", "omega2", "a", "a1", "a2", "kappa", "kappa1", "kappa2",
               "alpha", "p", "r", "n", "m")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("system")
    g.add_argument("--preset", choices=sorted(PRESETS))
    for name in PARAM_FLAGS:
        kind = int if name in ("n", "m") else float
        g.add_argument(f"--{name}", type=kind)
    o = common.add_argument_group("numerics and output")
    o.add_argument("--grid", type=int, help="grid size (equilibrium seeds or region cells)")
    o.add_argument("--tmax", type=float, help="integration budget per orbit")
    o.add_argument("--rtol", type=float)
    o.add_argument("--atol", type=float)
    o.add_argument("--svg", action="store_true", default=None, help="also render an SVG figure")
    o.add_argument("--out", help="output directory (default: current directory)")
    o.add_argument("--seed", type=int, help="seed for random sampling")
    o.add_argument("--config", help="JSON experiment config; flags override its values")

    parser = argparse.ArgumentParser(prog="rotatorlab",
                                     description="Two coupled active rotators on the torus.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    sp = sub.add_parser("symmetry-check", parents=[common],
                        help="reversibility residuals on random points")
    sp.add_argument("--samples", type=int)
    sub.add_parser("equilibria", parents=[common], help="equilibrium census as CSV")
    sp = sub.add_parser("portrait", parents=[common],
                        help="region map, equilibria and separatrices")
    sp.add_argument("--window", type=float, nargs=4, metavar=("X0", "X1", "Y0", "Y1"))
    sp = sub.add_parser("regions", parents=[common], help="region map CSV")
    sp.add_argument("--window", type=float, nargs=4, metavar=("X0", "X1", "Y0", "Y1"))
    sp = sub.add_parser("bifdiag", parents=[common], help="two-parameter bifurcation diagram")
    sp.add_argument("--case", choices=("I", "II"))
    sp.add_argument("--plane", choices=bif.PLANES)
    sp.add_argument("--range", type=float, nargs=4, metavar=("K0", "K1", "Y0", "Y1"))
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--connections", type=int, metavar="N",
                    help="continue saddle connections for up to N points each way (0 = off)")
    sp = sub.add_parser("connect", parents=[common], help="locate a saddle connection")
    sp.add_argument("--case", choices=("I", "II"))
    sp.add_argument("--plane", choices=bif.PLANES)
    sp.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--trace", type=int, metavar="N", help="continue the curve for N points")
    sp.add_argument("--step", type=float)
    sp = sub.add_parser("burst-scan", parents=[common], help="limit cycles against detuning")
    sp.add_argument("--omega0", type=float)
    sp.add_argument("--eps-min", type=float)
    sp.add_argument("--eps-max", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--no-continuation", action="store_true", default=None)
    return parser


OPTION_KEYS = {
    "symmetry-check": ("samples",),
    "portrait": ("window",),
    "regions": ("window",),
    "bifdiag": ("case", "plane", "range", "resolution", "connections"),
    "connect": ("case", "plane", "bracket", "trace", "step"),
    "burst-scan": ("omega0", "eps_min", "eps_max", "steps", "no_continuation"),
    "equilibria": (),
}


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    if ns.config:
        try:
            cfg = ExperimentConfig.from_json(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg.command = ns.command
    else:
        cfg = ExperimentConfig(command=ns.command)
    if ns.preset is not None:
        cfg.preset = ns.preset
        cfg.params = {k: v for k, v in cfg.params.items() if k in PRESETS[ns.preset]}
    for name in PARAM_FLAGS:
        val = getattr(ns, name)
        if val is None:
            continue
        if name not in PRESETS[cfg.preset]:
            raise ConfigError(f"--{name} does not apply to preset {cfg.preset}")
        cfg.params[name] = val
    for name in ("grid", "tmax", "rtol", "atol", "svg", "out", "seed"):
        val = getattr(ns, name)
        if val is not None:
            setattr(cfg, name, val)
    for key in OPTION_KEYS[ns.command]:
        val = getattr(ns, key, None)
        if val is not None:
            cfg.options[key] = val
    cfg.__post_init__()
    if cfg.grid is not None and cfg.grid < 1:
        raise ConfigError("--grid must be positive")
    if cfg.tmax is not None and not cfg.tmax > 0:
        raise ConfigError("--tmax must be positive")
    return cfg


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def _emit(title: str, rows: dict) -> None:
    print(f"== {title} ==")
    for k, v in rows.items():
        print(f"{k}\t{v}")


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_symmetry_check(cfg: ExperimentConfig) -> dict:
    system = cfg.build_system()
    pts = random_points(int(cfg.options.get("samples", 1000)), cfg.seed)
    report = {"system": system.label, "reversible": system.is_reversible}
    if system.is_reversible:
        report["R_residual"] = reversibility_residual(system, REVERSAL, pts)
    if system.is_case_i and system.f1.constant == 0.0:
        report["R2_residual"] = reversibility_residual(system, REVERSAL_2, pts)
    out = _outdir(cfg)
    (out / "symmetry.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    _emit("symmetry-check", report)
    return report


def cmd_equilibria(cfg: ExperimentConfig) -> dict:
    system = cfg.build_system()
    eqs = find_equilibria(system, cfg.grid or 24)
    out = _outdir(cfg)
    write_csv(eqs, out / "equilibria.csv")
    if cfg.svg:
        from .render import portrait_scene, render_svg
        render_svg(portrait_scene(equilibria=eqs, title=system.label), out / "equilibria.svg")
    counts = {k.value: sum(1 for e in eqs if e.kind is k) for k in EqClass}
    _emit("equilibria", {"count": len(eqs), **{k: v for k, v in counts.items() if v}})
    return {"count": len(eqs)}


def _window(cfg) -> tuple[float, float, float, float]:
    w = cfg.options.get("window")
    if w is None:
        return (0.0, TWO_PI, 0.0, TWO_PI)
    w = tuple(float(v) for v in w)
    if abs(w[1] - w[0] - TWO_PI) > 1e-3 or abs(w[3] - w[2] - TWO_PI) > 1e-3:
        raise ConfigError("the window must span one period in each angle")
    # typed-in edges are rounded; snap so the cells tile exactly one period
    return (w[0], w[0] + TWO_PI, w[2], w[2] + TWO_PI)


def _regions(cfg: ExperimentConfig, system, eqs):
    ccfg = ClassifyConfig(t_max=cfg.tmax or 500.0, rtol=cfg.rtol, atol=cfg.atol)
    grid = cfg.grid or 64
    if grid < 16:
        raise ConfigError("region maps need --grid of at least 16")
    return region_map(system, grid, ccfg, _window(cfg), equilibria=eqs)


def cmd_regions(cfg: ExperimentConfig, separatrices: bool = False) -> dict:
    system = cfg.build_system()
    eqs = find_equilibria(system)
    rm = _regions(cfg, system, eqs)
    out = _outdir(cfg)
    name = "portrait" if separatrices else "regions"
    rm.to_csv(out / f"{name}.csv")
    seps = []
    if separatrices:
        for e in eqs:
            if e.kind is EqClass.SADDLE:
                seps.extend(compute_separatrices(system, e, cfg.tmax or 200.0, eqs,
                                                 rtol=cfg.rtol, atol=cfg.atol))
        with open(out / "separatrices.csv", "w") as fh:
            fh.write("saddle,branch,termination,t,phi1_lift,phi2_lift\n")
            for k, s in enumerate(seps):
                for t, (x, y) in zip(s.path.t, s.path.y):
                    fh.write(f"{k // 4},{s.branch},{s.termination},{t:.10g},{x:.10g},{y:.10g}\n")
    if cfg.svg:
        from .render import portrait_scene, render_svg
        render_svg(portrait_scene(rm, eqs, seps, window=_window(cfg), title=system.label),
                   out / f"{name}.svg")
    kinds = {}
    for lab in rm.labels:
        kinds[lab.code] = kinds.get(lab.code, 0) + 1
    _emit(name, {"cells": len(rm.labels), **dict(sorted(kinds.items())),
                 "equilibria": len(eqs), "separatrices": len(seps)})
    return kinds


def _case_plane(cfg):
    case = cfg.options.get("case", "I" if cfg.preset != "caseII" else "II")
    plane = cfg.options.get("plane", "kw")
    if cfg.preset not in ("caseI", "caseII"):
        raise ConfigError("diagrams are defined for the caseI and caseII presets")
    fixed = "a" if plane == "kw" else "omega"
    if cfg.params.get(fixed, 1.0) != 1.0:
        raise ConfigError(f"the {plane} plane is drawn at {fixed} = 1 (other values rescale it)")
    return case, plane


def cmd_bifdiag(cfg: ExperimentConfig) -> dict:
    case, plane = _case_plane(cfg)
    window = tuple(cfg.options.get("range", (-3.0, 3.0, -3.0, 3.0)))
    curves = bif.trace_analytic_curves(case, plane, window, int(cfg.options.get("resolution", 400)))
    n_conn = int(cfg.options.get("connections", 60))
    if n_conn > 0 and case == "I" and plane == "kw":
        for kappa in (1.0, -1.0):
            seeds = bif.scan_connection_seeds(case, plane, kappa, np.linspace(0.05, 0.95, 19))
            for seed in seeds:
                for step in (0.01, -0.01):
                    c = bif.trace_connection_curve(case, plane, seed, step, n_conn,
                                                   kappa_limits=window[:2],
                                                   ordinate_limits=window[2:])
                    curves.append(c)
    out = _outdir(cfg)
    bif.save_diagram(curves, out / "diagram.json")
    if cfg.svg:
        from .render import diagram_scene, render_svg
        render_svg(diagram_scene(curves, window, plane, f"case {case}"), out / "diagram.svg")
    kinds = sorted({c.kind for c in curves})
    _emit("bifdiag", {"curves": len(curves), "kinds": ",".join(kinds)})
    return {"kinds": kinds}


def cmd_connect(cfg: ExperimentConfig) -> dict:
    case, plane = _case_plane(cfg)
    kappa = float(cfg.params.get("kappa", DEFAULTS["kappa"]))
    bracket = cfg.options.get("bracket")
    if bracket is None:
        raise ConfigError("connect needs --bracket LO HI in the ordinate")
    lo, hi = sorted(float(v) for v in bracket)
    seeds = bif.scan_connection_seeds(case, plane, kappa, np.linspace(lo, hi, 9))
    if not seeds:
        raise NoSignChange("no miss sign change inside the bracket")
    seed = seeds[0]
    n_trace = int(cfg.options.get("trace", 1))
    curve = bif.trace_connection_curve(case, plane, seed, float(cfg.options.get("step", 0.01)),
                                       max(n_trace, 1))
    out = _outdir(cfg)
    bif.save_diagram([curve], out / "connection.json")
    if cfg.svg:
        from .render import diagram_scene, render_svg
        pts = curve.points
        pad = 0.1
        window = (pts[:, 0].min() - pad, pts[:, 0].max() + pad,
                  pts[:, 1].min() - pad, pts[:, 1].max() + pad)
        render_svg(diagram_scene([curve], window, plane), out / "connection.svg")
    k0, y0 = curve.points[0]
    report = {"kappa": k0, "ordinate": y0, "miss": curve.meta["miss"][0],
              "points": len(curve), "stop": curve.meta["stop"]}
    _emit("connect", report)
    return report


def cmd_burst_scan(cfg: ExperimentConfig) -> dict:
    if cfg.preset != "sinusoidal":
        raise ConfigError("burst-scan uses the sinusoidal preset (signs via --kappa1/--kappa2)")
    if cfg.params.get("a1", 1.0) != cfg.params.get("a2", 1.0):
        raise ConfigError("burst-scan needs identical excitabilities a1 = a2")
    if "omega1" in cfg.params or "omega2" in cfg.params:
        raise ConfigError("burst-scan sets omega1,2 = omega0 -/+ eps; use --omega0")
    ref = FIG9_SIGNS
    base = BurstParams(float(cfg.options.get("omega0", ref.omega0)), cfg.params.get("a1", ref.a),
                       cfg.params.get("kappa1", ref.kappa1), cfg.params.get("kappa2", ref.kappa2),
                       cfg.params.get("alpha", ref.alpha))
    e0 = float(cfg.options.get("eps_min", 0.005))
    e1 = float(cfg.options.get("eps_max", 0.1))
    steps = int(cfg.options.get("steps", 200))
    if not 0 < e0 < e1 or steps < 2:
        raise ConfigError("need 0 < eps-min < eps-max and at least two steps")
    eps = np.linspace(e1, e0, steps)
    res = scan_epsilon(base, eps, continuation=not cfg.options.get("no_continuation", False))
    out = _outdir(cfg)
    res.to_csv(out / "burst_scan.csv")
    if cfg.svg:
        from .render import render_svg, scan_scene
        pts = res.points
        render_svg(scan_scene([q.eps for q in pts], [q.max_isi for q in pts],
                              [q.winding for q in pts]), out / "burst_scan.svg")
    branches = res.branches()
    if not branches:
        raise NoConvergence("no limit cycle converged anywhere in the scan")
    _emit("burst-scan", {"points": len(res.points),
                         "converged": sum(q.converged for q in res.points),
                         "branches": " ".join(f"({w[0]},{w[1]})" for w, _a, _b in branches)})
    return {"branches": branches}


HANDLERS = {
    "symmetry-check": cmd_symmetry_check,
    "equilibria": cmd_equilibria,
    "portrait": lambda cfg: cmd_regions(cfg, separatrices=True),
    "regions": cmd_regions,
    "bifdiag": cmd_bifdiag,
    "connect": cmd_connect,
    "burst-scan": cmd_burst_scan,
}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        cfg = config_from_args(ns)
        out = _outdir(cfg)
        (out / "config.json").write_text(cfg.to_json())
        HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"rotatorlab: config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"rotatorlab: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
