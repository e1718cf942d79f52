"""Limit cycles of the detuned (non-reversible) system and the bursting cascade."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .equilibria import EqClass, find_equilibria
from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, SectionSpec, Termination, integrate
from .model import TWO_PI, RotatorSystem, centered, sinusoidal

FD_STEP = 1e-6
NEUTRAL_TOL = 1e-6


class NoConvergence(RuntimeError):
    pass


class EscapedToSink(RuntimeError):
    pass


class NoSpikes(ValueError):
    pass


@dataclass
class LimitCycle:
    anchor: np.ndarray
    period: float
    winding: tuple[int, int]
    floquet: float
    section: SectionSpec
    residual: float = 0.0
    returns: int = 0

    @property
    def stable(self) -> bool:
        return abs(self.floquet) < 1.0

    @property
    def isolated(self) -> bool:
        return abs(self.floquet - 1.0) >= NEUTRAL_TOL


@dataclass
class _ReturnMap:
    system: RotatorSystem
    section: SectionSpec
    budget: float
    rtol: float
    atol: float
    sinks: np.ndarray
    calls: int = 0

    @property
    def tangent(self) -> np.ndarray:
        n = self.section.normal
        return np.array([-n[1], n[0]])

    def point(self, u: float) -> np.ndarray:
        return np.asarray(self.section.center) + u * self.tangent

    def coord(self, state) -> float:
        return float(centered(np.asarray(state) - np.asarray(self.section.center)) @ self.tangent)

    def __call__(self, u: float):
        """Next directed crossing from the section point at ``u``: (u', time, lifted end)."""
        self.calls += 1
        start = self.point(u)
        tr = integrate(self.system, start, self.budget, rtol=self.rtol, atol=self.atol,
                       events=[self.section], stop_on_event=True, record=False,
                       sinks=self.sinks, capture_radius=1e-4, capture_speed=1e-9)
        if tr.termination is Termination.SINK_CAPTURE:
            raise EscapedToSink("orbit captured by a sink")
        if tr.termination is not Termination.SECTION_EVENT:
            raise NoConvergence("no return to the section within the time budget")
        ev = tr.events[0]
        return self.coord(ev.state), ev.t, ev.state - start


def _flow_section(system: RotatorSystem, point, half_width: float) -> SectionSpec:
    v = system.rhs(point)
    return SectionSpec.segment(point, v, half_width, direction=1)


def find_limit_cycle(system: RotatorSystem, ic_guess, section: SectionSpec | None = None,
                     max_returns: int = 60, *, transient: float = 300.0,
                     half_width: float = 0.02, tol: float = 1e-9, budget: float = 5000.0,
                     slow_window: float = 400.0,
                     rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                     sinks: np.ndarray | None = None) -> LimitCycle:
    """Fixed point of the return map on a short transversal segment.

    After ``transient`` time units the segment is placed, normal to the flow,
    through the slowest point seen over the next ``slow_window`` time units
    (unless ``section`` is given). The scalar
    return map ``u -> P(u)`` along the segment is solved by secant steps on
    ``P(u) - u``, falling back to plain iteration when a secant step leaves
    the segment. The Floquet multiplier is ``P'(u*)`` by central differences.
    """
    if sinks is None:
        sinks = np.array([e.position for e in find_equilibria(system)
                          if e.kind is EqClass.SINK]).reshape(-1, 2)
    point = np.asarray(ic_guess, dtype=float)
    if transient > 0:
        tr = integrate(system, point, transient, rtol=rtol, atol=atol, record=False,
                       sinks=sinks, capture_radius=1e-4, capture_speed=1e-9)
        if tr.termination is Termination.SINK_CAPTURE:
            raise EscapedToSink("orbit captured by a sink during the transient")
        point = tr.end
    if section is None:
        # anchor at the slowest point of a window: the passage near the saddle
        # is visited once per period, while fast strands can lie close together
        tr = integrate(system, point, slow_window, rtol=rtol, atol=atol, h_max=0.05,
                       sinks=sinks, capture_radius=1e-4, capture_speed=1e-9)
        if tr.termination is Termination.SINK_CAPTURE:
            raise EscapedToSink("orbit captured by a sink during the transient")
        speed = np.linalg.norm(system.rhs(tr.y), axis=1)
        point = tr.y[int(np.argmin(speed))]
        section = _flow_section(system, point, half_width)
    pmap = _ReturnMap(system, section, budget, rtol, atol, sinks)
    u0 = pmap.coord(point)
    u1, period, disp = pmap(u0)
    g0 = u1 - u0
    u_prev, g_prev = u0, g0
    u = u1
    while abs(g_prev) >= tol:
        if pmap.calls >= max_returns:
            raise NoConvergence(f"return map not converged after {pmap.calls} returns "
                                f"(|P(u)-u| = {abs(g_prev):.3g})")
        un, period, disp = pmap(u)
        g = un - u
        if abs(g) < tol:
            u_prev, g_prev = u, g
            break
        nxt = un
        if g != g_prev:
            secant = u - g * (u - u_prev) / (g - g_prev)
            if abs(secant) < section.half_width:
                nxt = secant
        u_prev, g_prev = u, g
        u = nxt
    u_star = u_prev
    u_star_img, period, disp = pmap(u_star)
    plus = pmap(u_star + FD_STEP)[0]
    minus = pmap(u_star - FD_STEP)[0]
    floquet = (plus - minus) / (2 * FD_STEP)
    turns = disp / TWO_PI
    winding = (int(round(turns[0])), int(round(turns[1])))
    return LimitCycle(pmap.point(u_star), period, winding, float(floquet), section,
                      abs(u_star_img - u_star), pmap.calls)


def floquet_from_divergence(system: RotatorSystem, cycle: LimitCycle,
                            rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> float:
    """Nontrivial multiplier of a planar cycle as ``exp`` of the integrated divergence."""
    tr = integrate(system, cycle.anchor, cycle.period, rtol=rtol, atol=atol, h_max=0.01)
    div = system.divergence(tr.y)
    return float(math.exp(np.trapezoid(div, tr.t)))


def spike_times(system: RotatorSystem, cycle: LimitCycle, level: float = math.pi,
                index: int = 0, rtol: float = DEFAULT_RTOL,
                atol: float = DEFAULT_ATOL) -> np.ndarray:
    """Net upward crossings of ``phi_index = level`` during one period.

    An upward crossing that is undone by a later downward crossing (an aborted
    spike during the slow passage) is dropped, so the count per period equals
    the winding of ``phi_index``. Two periods are integrated so that crossings
    undone across the period boundary are cancelled too.
    """
    secs = [SectionSpec.phase(index, level, direction=1),
            SectionSpec.phase(index, level, direction=-1)]
    tr = integrate(system, cycle.anchor, 2 * cycle.period, rtol=rtol, atol=atol, record=False,
                   events=secs)
    ups: list[float] = []
    for ev in tr.events:
        if ev.section == 0:
            ups.append(ev.t)
        elif ups:
            ups.pop()
    ts = np.array([t - cycle.period for t in ups if t >= cycle.period])
    return ts


def isi_stats(system: RotatorSystem, cycle: LimitCycle, level: float = math.pi,
              index: int = 0) -> tuple[float, float]:
    """``(max ISI, mean ISI)`` over one period, counting the wrap-around gap."""
    ts = spike_times(system, cycle, level, index)
    if len(ts) == 0:
        raise NoSpikes("the cycle never crosses the spike level")
    gaps = np.diff(np.append(ts, ts[0] + cycle.period))
    return float(gaps.max()), float(cycle.period / len(ts))


def max_isi(system: RotatorSystem, cycle: LimitCycle, level: float = math.pi,
            index: int = 0) -> float:
    return isi_stats(system, cycle, level, index)[0]


# ----------------------------------------------------------------------------
# detuning scans
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BurstParams:
    """``omega_{1,2} = omega0 -/+ eps`` with per-oscillator coupling signs."""

    omega0: float = 1.1
    a: float = 1.0
    kappa1: float = 1.0
    kappa2: float = -1.0
    alpha: float = 0.0

    def system(self, eps: float) -> RotatorSystem:
        return sinusoidal(self.omega0 - eps, self.omega0 + eps, self.a, self.a,
                          self.kappa1, self.kappa2, self.alpha)


# κ1,2 = ±1 gives an unstable focus and the bursting cycle; ∓1 makes the focus a sink
FIG9_SIGNS = BurstParams(kappa1=1.0, kappa2=-1.0)
FIG8_SIGNS = BurstParams(kappa1=-1.0, kappa2=1.0)


@dataclass
class ScanPoint:
    eps: float
    max_isi: float
    winding: tuple[int, int]
    period: float
    floquet: float
    converged: bool
    anchor: np.ndarray | None = None


@dataclass
class ISIScanResult:
    points: list[ScanPoint] = field(default_factory=list)

    def windings(self) -> list[tuple[int, int]]:
        return [p.winding for p in self.points if p.converged]

    def branches(self) -> list[tuple[tuple[int, int], float, float]]:
        """Runs of equal winding as ``(winding, eps_first, eps_last)`` in scan order."""
        out = []
        for p in self.points:
            if not p.converged:
                continue
            if out and out[-1][0] == p.winding:
                out[-1] = (p.winding, out[-1][1], p.eps)
            else:
                out.append((p.winding, p.eps, p.eps))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "max_isi", "p", "q", "period", "floquet", "converged"])
            for p in self.points:
                w.writerow([f"{p.eps:.10g}", f"{p.max_isi:.10g}", p.winding[0], p.winding[1],
                            f"{p.period:.10g}", f"{p.floquet:.10g}", int(p.converged)])


def scan_epsilon(base: BurstParams, eps_values: Sequence[float], continuation: bool = True,
                 ic=(0.1, 0.2), transient: float = 300.0, warm_transient: float = 20.0,
                 progress: Callable[[ScanPoint], None] | None = None,
                 **cycle_kw) -> ISIScanResult:
    """Limit cycle, winding and max ISI at each detuning in ``eps_values``.

    With ``continuation`` each point starts from the previous cycle's anchor
    and a short transient. Failures are recorded as unconverged points.
    """
    eps_values = [float(e) for e in eps_values]
    if any(e == 0.0 for e in eps_values):
        raise ValueError("eps = 0 is reversible and has no isolated cycle")
    diffs = np.diff(eps_values)
    if len(diffs) and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("eps values must be strictly monotone")
    result = ISIScanResult()
    guess = np.asarray(ic, dtype=float)
    warm = False
    for eps in eps_values:
        system = base.system(eps)
        try:
            cyc = find_limit_cycle(system, guess, transient=warm_transient if warm else transient,
                                   **cycle_kw)
            mx = max_isi(system, cyc)
            pt = ScanPoint(eps, mx, cyc.winding, cyc.period, cyc.floquet, True, cyc.anchor)
            if continuation:
                guess, warm = cyc.anchor, True
        except (NoConvergence, EscapedToSink, NoSpikes):
            pt = ScanPoint(eps, math.nan, (0, 0), math.nan, math.nan, False)
            guess, warm = np.asarray(ic, dtype=float), False
        result.points.append(pt)
        if progress is not None:
            progress(pt)
    return result


def winding_ratio(w: tuple[int, int]) -> Fraction:
    return Fraction(w[0], w[1])


def is_adjacent_branch(w: tuple[int, int]) -> bool:
    return w[0] > 0 and w[1] == w[0] + 1


def locate_transition(base: BurstParams, eps_lo: float, eps_hi: float, w_lo, w_hi,
                      tol: float = 1e-6, **cycle_kw) -> tuple[float, float]:
    """Shrink ``[eps_lo, eps_hi]`` around the end of the branch ``w_lo`` (at ``eps_lo``)."""
    while eps_hi - eps_lo > tol:
        mid = 0.5 * (eps_lo + eps_hi)
        try:
            w = find_limit_cycle(base.system(mid), (0.1, 0.2), **cycle_kw).winding
        except (NoConvergence, EscapedToSink):
            return eps_lo, eps_hi
        if w == tuple(w_lo):
            eps_lo = mid
        elif w == tuple(w_hi):
            eps_hi = mid
        else:
            return eps_lo, eps_hi
    return eps_lo, eps_hi


def mediant(w1: tuple[int, int], w2: tuple[int, int]) -> tuple[int, int]:
    return (w1[0] + w2[0], w1[1] + w2[1])


def mediant_window(base: BurstParams, eps_a: float, eps_b: float, w_a, w_b,
                   n_points: int = 101, **scan_kw) -> tuple[float, float] | None:
    """Scan between the ends of two branches for the branch with their mediant winding.

    ``eps_a`` carries winding ``w_a`` and ``eps_b`` carries ``w_b``. Returns
    the detuning range over which the mediant cycle was found, or ``None``.
    """
    target = mediant(tuple(w_a), tuple(w_b))
    res = scan_epsilon(base, np.linspace(eps_a, eps_b, n_points), **scan_kw)
    hits = [p.eps for p in res.points if p.converged and p.winding == target]
    if not hits:
        return None
    return min(hits), max(hits)


def branch_edge(result: ISIScanResult, w_a, w_b) -> tuple[float, float] | None:
    """Last detuning on branch ``w_a`` and first on ``w_b`` where they meet in a scan."""
    conv = [p for p in result.points if p.converged]
    for p, q in zip(conv, conv[1:]):
        if p.winding == tuple(w_a) and q.winding == tuple(w_b):
            return p.eps, q.eps
    return None
