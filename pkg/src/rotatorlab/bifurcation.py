"""Two-parameter bifurcation diagrams for the reversible cases.

Two planes are used: ``"kw"`` is ``(kappa, omega)`` at ``a = 1`` and ``"ka"``
is ``(kappa, a)`` at ``omega = 1``. Rescaling time by ``1/omega`` maps the
first onto the second through ``(kappa, omega) -> (kappa/omega, 1/omega)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .equilibria import case_i_saddle_center_branches
from .model import RotatorSystem, case_i, case_ii
from .portrait import (ConnectionTemplate, NoApproach, NoSignChange, find_connection)

KINDS = ("SaddleCenterI", "SaddleCenterII", "PitchforkI", "SinkSourceII", "HeteroclinicSS",
         "SecondReversalLine", "RotationalSymLine")
PLANES = ("kw", "ka")
AXES = {"kw": ("kappa", "omega"), "ka": ("kappa", "a")}


class SeedNotBracketing(ValueError):
    pass


@dataclass
class BifCurve:
    kind: str
    plane: str
    points: np.ndarray
    branch: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.plane not in PLANES:
            raise ValueError(f"unknown plane {self.plane!r}")
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.points)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "plane": self.plane, "branch": self.branch,
                "points": self.points.tolist(), "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "BifCurve":
        return cls(d["kind"], d["plane"], d["points"], d.get("branch", ""), d.get("meta", {}))


def save_diagram(curves, path) -> None:
    with open(path, "w") as fh:
        json.dump([c.to_dict() for c in curves], fh, indent=1)


def load_diagram(path) -> list[BifCurve]:
    with open(path) as fh:
        return [BifCurve.from_dict(d) for d in json.load(fh)]


def transform_plane(point) -> tuple[float, float]:
    """Map ``(kappa, omega)`` at ``a = 1`` to ``(kappa, a)`` at ``omega = 1``."""
    kappa, omega = float(point[0]), float(point[1])
    if omega == 0.0:
        raise ZeroDivisionError("omega = 0 is sent to infinity by the plane transform")
    return kappa / omega, 1.0 / omega


def transform_curve(curve: BifCurve) -> BifCurve:
    if curve.plane != "kw":
        raise ValueError("only (kappa, omega) curves are transformed")
    pts = curve.points
    keep = pts[:, 1] != 0.0
    img = np.column_stack([pts[keep, 0] / pts[keep, 1], 1.0 / pts[keep, 1]])
    return BifCurve(curve.kind, "ka", img, curve.branch, dict(curve.meta, transformed=True))


# ----------------------------------------------------------------------------
# closed-form loci
# ----------------------------------------------------------------------------

def _polylines(xs: np.ndarray, ys: np.ndarray, window) -> list[np.ndarray]:
    """Split samples at undefined values and at window exits."""
    x0, x1, y0, y1 = window
    ok = np.isfinite(ys) & (ys >= y0) & (ys <= y1) & (xs >= x0) & (xs <= x1)
    runs, cur = [], []
    for x, y, good in zip(xs, ys, ok):
        if good:
            cur.append((x, y))
        elif cur:
            runs.append(np.array(cur))
            cur = []
    if cur:
        runs.append(np.array(cur))
    return [r for r in runs if len(r) >= 2]


def _case_i_native_sc(x: np.ndarray):
    """Parametric case I saddle-center curve at ``omega = 1`` (double root at ``(x, -x)``)."""
    sx, cx = np.sin(x), np.cos(x)
    c2 = np.cos(2 * x)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = sx / (2 * c2 * cx + np.sin(2 * x) * sx)
        a = -2 * kappa * c2 / sx
    return kappa, a


def ordinates(case: str, kind: str, plane: str, kappa: float) -> list[float]:
    """All ordinates of an analytic curve above the abscissa ``kappa``.

    Each value is obtained independently of :func:`trace_analytic_curves`
    (in the ``"ka"`` plane by solving the double-root condition directly),
    which is what the plane-transform consistency check relies on.
    """
    if case == "I" and kind == "SaddleCenterI":
        if plane == "kw":
            outer, inner = case_i_saddle_center_branches(kappa, 1.0)
            return sorted(v for w in (outer, inner) if not math.isnan(w) for v in (w, -w))
        if abs(kappa) < 1e-12:
            return [-1.0, 1.0]  # uncoupled units: both rotators at their SNIC
        # double root of 1 + a cos x - kappa sin 2x, with a eliminated through h' = 0
        def h(x):
            return kappa * (2 * math.cos(2 * x) * math.cos(x)
                            + math.sin(2 * x) * math.sin(x)) - math.sin(x)
        xs = np.linspace(0.0, 2 * math.pi, 2001)
        vals = [h(x) for x in xs]
        out = []
        for xa, xb, va, vb in zip(xs, xs[1:], vals, vals[1:]):
            if va == 0.0 or va * vb < 0:
                x = xa if va == 0.0 else brentq(h, xa, xb, xtol=1e-15, rtol=1e-15)
                sx = math.sin(x)
                if abs(sx) > 1e-12:
                    out.append(-2 * kappa * math.cos(2 * x) / sx)
        return sorted(out)
    if case == "I" and kind == "PitchforkI":
        return [-1.0, 1.0]
    if case == "II" and kind == "SaddleCenterII":
        if plane == "kw":
            return [-1.0 / (8 * kappa) - kappa] if abs(kappa) > 0.25 else []
        arg = -8 * kappa * (1 + kappa)
        if arg < 0 or not (kappa < -1.0 / 3.0):
            return []
        return sorted({-math.sqrt(arg), math.sqrt(arg)})
    if case == "II" and kind == "SinkSourceII":
        if plane == "kw":
            return [kappa - 1.0, kappa + 1.0]
        return sorted({kappa - 1.0, 1.0 - kappa})
    return []


def trace_analytic_curves(case: str, plane: str, window=(-3.0, 3.0, -3.0, 3.0),
                          resolution: int = 400) -> list[BifCurve]:
    """Sample every closed-form curve of ``case`` (``"I"`` or ``"II"``) in ``window``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if case not in ("I", "II"):
        raise ValueError("case is 'I' or 'II'")
    if plane not in PLANES:
        raise ValueError(f"unknown plane {plane!r}")
    k0, k1, y0, y1 = window
    ks = np.linspace(k0, k1, resolution)
    curves: list[BifCurve] = []

    def add(kind, branch, xs, ys):
        for run in _polylines(np.asarray(xs), np.asarray(ys), window):
            curves.append(BifCurve(kind, plane, run, branch))

    if case == "I" and plane == "kw":
        branches = np.array([case_i_saddle_center_branches(k, 1.0) for k in ks])
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            add("SaddleCenterI", "outer" + tag, ks, sign * branches[:, 0])
            add("SaddleCenterI", "inner" + tag, ks, sign * branches[:, 1])
            add("PitchforkI", tag, ks, np.full_like(ks, sign))
        add("SecondReversalLine", "+", ks, np.where(ks >= 0.5, 0.0, np.nan))
        add("SecondReversalLine", "-", ks, np.where(ks <= -0.5, 0.0, np.nan))
    elif case == "I":
        # parametric in the position x of the double root on the anti-diagonal
        xs = np.linspace(0.0, 2 * math.pi, 8 * resolution + 1)[1:-1]
        kappa, a = _case_i_native_sc(xs)
        jump = np.abs(np.diff(kappa)) > 0.5 * (k1 - k0)
        kappa[1:][jump] = np.nan
        add("SaddleCenterI", "", kappa, np.where(np.isfinite(kappa), a, np.nan))
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            add("PitchforkI", tag, ks, np.full_like(ks, sign))
        add("RotationalSymLine", "+", ks, np.where(ks >= 1.0, 0.0, np.nan))
        add("RotationalSymLine", "-", ks, np.where(ks <= -1.0, 0.0, np.nan))
    elif plane == "kw":
        with np.errstate(divide="ignore"):
            sc = np.where(np.abs(ks) > 0.25, -1.0 / (8 * ks) - ks, np.nan)
        add("SaddleCenterII", "+", np.where(ks > 0, ks, np.nan), np.where(ks > 0, sc, np.nan))
        add("SaddleCenterII", "-", np.where(ks < 0, ks, np.nan), np.where(ks < 0, sc, np.nan))
        ws = np.linspace(y0, y1, resolution)
        add("SinkSourceII", "w+a", ws + 1.0, ws)
        add("SinkSourceII", "w-a", ws - 1.0, ws)
    else:
        arg = -8 * ks * (1 + ks)
        ok = (arg >= 0) & (ks < -1.0 / 3.0)
        root = np.where(ok, np.sqrt(np.where(ok, arg, 0.0)), np.nan)
        add("SaddleCenterII", "+", ks, root)
        add("SaddleCenterII", "-", ks, -root)
        add("SinkSourceII", "k-1", ks, ks - 1.0)
        add("SinkSourceII", "1-k", ks, 1.0 - ks)
    return curves


# ----------------------------------------------------------------------------
# numerically continued saddle connections
# ----------------------------------------------------------------------------

def plane_system(case: str, plane: str, kappa: float, ordinate: float) -> RotatorSystem:
    make = case_i if case == "I" else case_ii
    if plane == "kw":
        return make(ordinate, 1.0, kappa)
    return make(1.0, ordinate, kappa)


@dataclass
class ConnectionSeed:
    """Start of a connection curve: a coupling value and a bracket in the ordinate."""

    kappa: float
    bracket: tuple[float, float]
    from_ref: np.ndarray
    target_ref: np.ndarray | str
    branch: str = "unstable+"
    t_max: float = 200.0

    def template(self, case: str, plane: str, kappa: float) -> ConnectionTemplate:
        return ConnectionTemplate(lambda y: plane_system(case, plane, kappa, y),
                                  np.asarray(self.from_ref, dtype=float),
                                  self.target_ref if isinstance(self.target_ref, str)
                                  else np.asarray(self.target_ref, dtype=float),
                                  self.branch, self.t_max)


def _bracket_around(tpl: ConnectionTemplate, centre: float, width: float, limits,
                    grow: int = 6):
    lo_lim, hi_lim = limits
    for _ in range(grow):
        lo, hi = max(centre - width, lo_lim), min(centre + width, hi_lim)
        try:
            m_lo, m_hi = tpl.miss(lo), tpl.miss(hi)
        except NoApproach:
            width *= 0.5
            continue
        if (m_lo > 0) != (m_hi > 0):
            return lo, hi
        width *= 2.0
    return None


def trace_connection_curve(case: str, plane: str, seed: ConnectionSeed, step: float = 1e-2,
                           max_points: int = 200, kappa_limits=(-10.0, 10.0),
                           ordinate_limits=(-10.0, 10.0), tol: float = 1e-10,
                           progress: Callable[[int, float, float], None] | None = None) -> BifCurve:
    """Continue a saddle connection by stepping ``kappa`` and bisecting the ordinate.

    The walk moves in the sign of ``step``; saddle references are re-anchored
    at each accepted point. It stops at the domain edge, when the bracket is
    lost (the saddle pair merges or disappears), or at ``max_points``.
    """
    tpl = seed.template(case, plane, seed.kappa)
    try:
        first = find_connection(tpl, seed.bracket, tol=tol)
    except (NoSignChange, NoApproach) as exc:
        raise SeedNotBracketing(str(exc)) from exc
    pts = [(seed.kappa, first.value)]
    misses = [first.miss]
    current = replace(seed, kappa=seed.kappa)
    current = _reanchor(current, tpl, first.value)
    reason = "maxPoints"
    while len(pts) < max_points:
        kappa = pts[-1][0] + step
        if not kappa_limits[0] <= kappa <= kappa_limits[1]:
            reason = "domainEdge"
            break
        if len(pts) >= 2:
            slope = (pts[-1][1] - pts[-2][1]) / (pts[-1][0] - pts[-2][0])
            guess = pts[-1][1] + slope * step
            width = max(4 * abs(slope * step), 1e-3)
        else:
            guess, width = pts[-1][1], max(abs(seed.bracket[1] - seed.bracket[0]), 1e-3)
        tpl = current.template(case, plane, kappa)
        try:
            br = _bracket_around(tpl, guess, width, ordinate_limits)
            if br is None:
                reason = "lostBracket"
                break
            res = find_connection(tpl, br, tol=tol)
        except (NoSignChange, NoApproach):
            reason = "lostBracket"
            break
        pts.append((kappa, res.value))
        misses.append(res.miss)
        current = _reanchor(current, tpl, res.value)
        if progress is not None:
            progress(len(pts), kappa, res.value)
    return BifCurve("HeteroclinicSS", plane, pts, seed.branch,
                    {"stop": reason, "miss": misses})


def _reanchor(seed: ConnectionSeed, tpl: ConnectionTemplate, value: float) -> ConnectionSeed:
    moved = tpl.follow(value)
    return replace(seed, from_ref=moved.from_ref, target_ref=moved.target_ref)


def mirror_seed(seed: ConnectionSeed) -> ConnectionSeed:
    """Seed for the ``kappa -> -kappa`` image of a case I connection.

    Swapping the oscillators maps case I at ``kappa`` to case I at ``-kappa``.
    """
    swap = lambda p: p if isinstance(p, str) else np.asarray(p, dtype=float)[::-1].copy()
    return replace(seed, kappa=-seed.kappa, from_ref=swap(seed.from_ref),
                   target_ref=swap(seed.target_ref))


def curve_residual(curve: BifCurve, case: str) -> float:
    """Largest deviation of an analytic curve's points from its defining equation."""
    worst = 0.0
    for k, y in curve.points:
        vals = ordinates(case, curve.kind, curve.plane, float(k))
        if curve.kind == "SinkSourceII" and curve.plane == "kw":
            vals = [y - 1.0, y + 1.0]
            worst = max(worst, min(abs(k - v) for v in vals))
            continue
        if curve.kind in ("SecondReversalLine", "RotationalSymLine"):
            worst = max(worst, abs(y))
            continue
        if not vals:
            return math.inf
        worst = max(worst, min(abs(y - v) for v in vals))
    return worst


def scan_connection_seeds(case: str, plane: str, kappa: float, ordinate_values,
                          t_max: float = 200.0) -> list[ConnectionSeed]:
    """Coarse sign scan for connections between saddles on the anti-diagonal.

    At each ordinate the anti-diagonal saddles are ordered by ``phi1``; every
    ordered pair and unstable branch gives one miss sign. A sign change
    between neighbouring ordinates with the same saddle count becomes a seed.
    """
    from .equilibria import EqClass, find_equilibria
    from .portrait import connection_miss

    rows = []
    for y in ordinate_values:
        system = plane_system(case, plane, kappa, float(y))
        saddles = sorted((e for e in find_equilibria(system)
                          if e.kind is EqClass.SADDLE and e.membership.in_fix_r),
                         key=lambda e: e.position[0])
        signs = {}
        for i, src in enumerate(saddles):
            for j, tgt in enumerate(saddles):
                if i == j:
                    continue
                for branch in ("unstable+", "unstable-"):
                    try:
                        m = connection_miss(system, src, tgt, branch, t_max)
                    except NoApproach:
                        continue
                    signs[(i, j, branch)] = (m > 0, src.position, tgt.position)
        rows.append((float(y), len(saddles), signs))
    seeds = []
    for (y0, n0, s0), (y1, n1, s1) in zip(rows, rows[1:]):
        if n0 != n1:
            continue
        for key, (sign0, src, tgt) in sorted(s0.items(), key=lambda kv: kv[0]):
            if key in s1 and s1[key][0] != sign0:
                # R-related partner connections share the bracket; keep one
                seeds.append(ConnectionSeed(kappa, (y0, y1), src.copy(), tgt.copy(), key[2],
                                            t_max))
                break
    return seeds
