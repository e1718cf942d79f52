"""Adaptive integration on the universal cover with section events.

Trajectories are never wrapped mid-run, so winding numbers are integer reads
of the lifted end points. The stepping itself lives in :mod:`._kernel`.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernel
from .model import TWO_PI, RotatorSystem, canonical, centered, torus_distance

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
DEFAULT_HMAX = 0.1
MAX_STEPS = 50_000_000


class Termination(enum.Enum):
    TIME_LIMIT = "timeLimit"
    SINK_CAPTURE = "sinkCapture"
    SECTION_EVENT = "sectionEvent"
    STEP_FAILURE = "stepFailure"


_STATUS = {
    _kernel.STATUS_TIME: Termination.TIME_LIMIT,
    _kernel.STATUS_SINK: Termination.SINK_CAPTURE,
    _kernel.STATUS_EVENT: Termination.SECTION_EVENT,
    _kernel.STATUS_FAIL: Termination.STEP_FAILURE,
}


class IntegrationError(RuntimeError):
    """Raised on step-size underflow; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


class SectionBudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SectionSpec:
    """A curve on the torus whose crossings are reported as events.

    ``kind`` is one of ``"phase"``, ``"fixR"``, ``"line"`` (closed lattice
    lines ``n . x = offset mod 2 pi``), ``"segment"`` (a short transversal
    through a point) or ``"approach"`` (local minima of the distance to an
    anchor).  ``direction`` is +1, -1 or 0 (both).
    """

    kind: str
    normal: tuple[float, float] = (1.0, 0.0)
    offset: float = 0.0
    direction: int = 0
    center: tuple[float, float] = (0.0, 0.0)
    half_width: float = 0.0
    radius: float = math.inf
    stop_after: int = 0

    def __post_init__(self):
        if self.kind not in ("phase", "fixR", "line", "segment", "approach"):
            raise ValueError(f"unknown section kind {self.kind!r}")
        if self.direction not in (-1, 0, 1):
            raise ValueError("direction must be -1, 0 or +1")

    @classmethod
    def phase(cls, index: int, level: float, direction: int = 1, stop_after: int = 0):
        if index not in (0, 1):
            raise ValueError("oscillator index is 0 or 1")
        if direction not in (-1, 1):
            raise ValueError("phase crossings need a direction")
        normal = (1.0, 0.0) if index == 0 else (0.0, 1.0)
        return cls("phase", normal, float(canonical(level)), direction, stop_after=stop_after)

    @classmethod
    def fix_r(cls, direction: int = 0, stop_after: int = 0):
        """The anti-diagonal ``phi1 + phi2 = 0 mod 2 pi``."""
        return cls("fixR", (1.0, 1.0), 0.0, direction, stop_after=stop_after)

    @classmethod
    def line(cls, normal: Sequence[int], offset: float, direction: int = 0, stop_after: int = 0):
        n = tuple(float(v) for v in normal)
        if any(v != round(v) for v in n) or n == (0.0, 0.0):
            raise ValueError("closed torus lines need a non-zero integer normal")
        return cls("line", n, float(offset), direction, stop_after=stop_after)

    @classmethod
    def segment(cls, center, normal, half_width: float, direction: int = 1, stop_after: int = 0):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls("segment", (float(n[0]), float(n[1])), 0.0, direction,
                   center=(float(center[0]), float(center[1])),
                   half_width=float(half_width), stop_after=stop_after)

    @classmethod
    def approach(cls, anchor, radius: float = math.inf, stop_after: int = 0):
        return cls("approach", center=(float(anchor[0]), float(anchor[1])),
                   radius=float(radius), direction=1, stop_after=stop_after)

    def value(self, state) -> np.ndarray:
        """Signed section function; zero on the section (mod 2 pi for lattice kinds)."""
        state = np.asarray(state, dtype=float)
        if self.kind in ("phase", "fixR", "line"):
            return centered(state @ np.asarray(self.normal) - self.offset)
        if self.kind == "segment":
            w = centered(state - np.asarray(self.center))
            return w @ np.asarray(self.normal)
        return torus_distance(state, self.center)

    def packed(self) -> tuple[int, list[float], float]:
        if self.kind in ("phase", "fixR", "line"):
            return _kernel.KIND_LATTICE, [self.normal[0], self.normal[1], self.offset, 0.0], 0.0
        if self.kind == "segment":
            return (_kernel.KIND_SEGMENT,
                    [self.center[0], self.center[1], self.normal[0], self.normal[1]],
                    self.half_width)
        radius = min(self.radius, 1e300)
        return _kernel.KIND_APPROACH, [self.center[0], self.center[1], radius, 0.0], 0.0


@dataclass
class Event:
    t: float
    state: np.ndarray
    section: int


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    rtol: float
    atol: float
    termination: Termination
    events: list[Event] = field(default_factory=list)
    capture_index: int = -1
    backward: bool = False

    @property
    def end(self) -> np.ndarray:
        return self.y[-1]

    @property
    def wrapped(self) -> np.ndarray:
        return canonical(self.y)

    def events_of(self, section: int) -> list[Event]:
        return [e for e in self.events if e.section == section]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "phi1_lift", "phi2_lift", "phi1_mod", "phi2_mod"])
            mod = self.wrapped
            for t, (x1, x2), (m1, m2) in zip(self.t, self.y, mod):
                writer.writerow([f"{t:.12g}", f"{x1:.12g}", f"{x2:.12g}",
                                 f"{m1:.12g}", f"{m2:.12g}"])


def integrate(system: RotatorSystem, start, t_max: float, *,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              events: Sequence[SectionSpec] = (), stop_on_event: bool = False,
              sinks=None, capture_radius: float = 1e-4, capture_speed: float = 1e-9,
              record: bool = True, backward: bool = False, h_max: float = DEFAULT_HMAX,
              strict: bool = True) -> Trajectory:
    """Integrate ``system`` from the lifted point ``start`` for ``t_max`` time units.

    ``stop_on_event`` stops at the first event of any section; per-section
    ``stop_after`` counts give finer control. With ``backward`` the field is
    negated, times are still reported as elapsed (positive) time.
    ``sinks`` are torus points; the run stops once the speed drops below
    ``capture_speed`` within ``capture_radius`` of one of them.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    const, harm, cc, sc = system.packed
    m = len(events)
    ev_kind = np.zeros(m, dtype=np.int64)
    ev_par = np.zeros((m, 4))
    ev_aux = np.zeros(m)
    ev_dir = np.zeros(m, dtype=np.int64)
    ev_stop = np.zeros(m, dtype=np.int64)
    for i, sec in enumerate(events):
        kind, par, aux = sec.packed()
        ev_kind[i] = kind
        ev_par[i] = par
        ev_aux[i] = aux
        ev_dir[i] = sec.direction
        ev_stop[i] = 1 if stop_on_event else sec.stop_after
    cap = np.zeros((0, 2)) if sinks is None or len(sinks) == 0 else \
        np.asarray(sinks, dtype=float).reshape(-1, 2)
    y0 = np.asarray(start, dtype=float).reshape(2)
    sign = -1.0 if backward else 1.0
    ts, ys, _n, ev_t, ev_y, ev_i, _nev, status, cap_idx = _kernel.integrate_kernel(
        const, harm, cc, sc, sign, y0, 0.0, float(t_max), float(rtol), float(atol),
        float(h_max), ev_kind, ev_par, ev_aux, ev_dir, ev_stop,
        cap, float(capture_radius), float(capture_speed), bool(record), MAX_STEPS)
    traj = Trajectory(ts.copy(), ys.copy(), rtol, atol, _STATUS[int(status)],
                      [Event(float(t), y.copy(), int(i)) for t, y, i in zip(ev_t, ev_y, ev_i)],
                      int(cap_idx), backward)
    if strict and traj.termination is Termination.STEP_FAILURE:
        raise IntegrationError(f"step size underflow at t={ts[-1]:.6g}", traj)
    return traj


def closest_return(system: RotatorSystem, start, transient: float, window: float, *,
                   rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> tuple[float, float]:
    """Minimum torus distance back to the post-transient anchor within ``window``.

    Returns ``(return_time, distance)`` with the time measured from the
    anchor. If the orbit never turns back towards the anchor the distance
    at the end of the window is reported.
    """
    if not window > 0:
        raise ValueError("window must be positive")
    anchor = np.asarray(start, dtype=float)
    if transient > 0:
        anchor = integrate(system, anchor, transient, rtol=rtol, atol=atol, record=False).end
    traj = integrate(system, anchor, window, rtol=rtol, atol=atol, record=False,
                     events=[SectionSpec.approach(anchor)])
    best_t, best_d = window, float(torus_distance(traj.end, anchor))
    for ev in traj.events:
        d = float(torus_distance(ev.state, anchor))
        if d < best_d:
            best_t, best_d = ev.t, d
    return best_t, best_d


def poincare_return(system: RotatorSystem, section: SectionSpec, anchor, count: int, *,
                    budget: float | None = None, rtol: float = DEFAULT_RTOL,
                    atol: float = DEFAULT_ATOL) -> list[Event]:
    """The next ``count`` directed crossings of ``section`` after ``anchor``."""
    anchor = np.asarray(anchor, dtype=float)
    if abs(float(section.value(anchor))) > 1e-8:
        raise ValueError("anchor does not lie on the section")
    if budget is None:
        budget = 1000.0 * max(count, 1)
    sec = SectionSpec(**{**section.__dict__, "stop_after": count})
    traj = integrate(system, anchor, budget, rtol=rtol, atol=atol, events=[sec], record=False)
    if len(traj.events) < count:
        raise SectionBudgetExhausted(
            f"only {len(traj.events)} of {count} crossings within t={budget:g}")
    return traj.events


def winding_of(path_start, path_end) -> np.ndarray:
    return (np.asarray(path_end) - np.asarray(path_start)) / TWO_PI
