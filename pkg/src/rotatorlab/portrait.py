"""Global phase-portrait structure: separatrices, region maps, saddle connections."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .equilibria import (EqClass, Equilibrium, classify_equilibrium, find_equilibria,
                         newton)
from .integrate import (DEFAULT_ATOL, DEFAULT_RTOL, SectionSpec, Termination,
                        Trajectory, integrate)
from .model import REVERSAL, TWO_PI, RotatorSystem, canonical, centered, torus_distance

SEPARATRIX_OFFSET = 1e-6


class NotClosed(ValueError):
    pass


class AmbiguousWinding(ValueError):
    pass


class NoApproach(RuntimeError):
    pass


class NoSignChange(ValueError):
    pass


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("ROTATORLAB_THREADS", "")))
    except ValueError:
        return max(1, os.cpu_count() or 1)


# ----------------------------------------------------------------------------
# winding numbers
# ----------------------------------------------------------------------------

def winding_numbers(path: Trajectory | np.ndarray, closure_tol: float = 1e-4) -> tuple[int, int]:
    """Integer round trips ``(p, q)`` of a closed lifted path."""
    y = path.y if isinstance(path, Trajectory) else np.asarray(path, dtype=float)
    gap = float(torus_distance(y[-1], y[0]))
    if gap >= closure_tol:
        raise NotClosed(f"path does not close: end-point gap {gap:.3g}")
    turns = (y[-1] - y[0]) / TWO_PI
    rounded = np.round(turns)
    if np.max(np.abs(turns - rounded)) >= 0.01:
        raise AmbiguousWinding(f"non-integer winding {turns}")
    return int(rounded[0]), int(rounded[1])


def shoelace_area(loop: np.ndarray) -> float:
    """Signed area enclosed by a polygon (closed implicitly); > 0 is anticlockwise."""
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ----------------------------------------------------------------------------
# separatrices
# ----------------------------------------------------------------------------

@dataclass
class Separatrix:
    saddle: Equilibrium
    branch: str  # "unstable+", "unstable-", "stable+", "stable-"
    path: Trajectory
    termination: str  # "reachesEquilibrium", "closesHomoclinic", "crossesFixR", "timeLimit"
    target: int | None = None
    crossing: np.ndarray | None = None


def saddle_directions(saddle: Equilibrium) -> tuple[np.ndarray, np.ndarray]:
    """Unit (unstable, stable) eigenvectors with a fixed sign convention."""
    vals, vecs = np.linalg.eig(saddle.jacobian)
    vals = vals.real
    out = []
    for idx in (int(np.argmax(vals)), int(np.argmin(vals))):
        v = vecs[:, idx].real
        v = v / np.linalg.norm(v)
        if v[0] < 0 or (v[0] == 0 and v[1] < 0):
            v = -v
        out.append(v)
    return out[0], out[1]


def _branch_start(saddle: Equilibrium, branch: str, eps: float) -> tuple[np.ndarray, bool]:
    unstable, stable = saddle_directions(saddle)
    vec = unstable if branch.startswith("unstable") else stable
    sign = 1.0 if branch.endswith("+") else -1.0
    return saddle.position + sign * eps * vec, branch.startswith("stable")


def _first_fix_r_crossing(system, start, t_max, backward, avoid, others, rtol, atol):
    """Integrate until the first anti-diagonal crossing away from ``avoid``."""
    t_used = 0.0
    y = np.asarray(start, dtype=float)
    pieces_t, pieces_y = [], []
    while t_used < t_max:
        tr = integrate(system, y, t_max - t_used, rtol=rtol, atol=atol, backward=backward,
                       events=[SectionSpec.fix_r(stop_after=1)], sinks=others,
                       capture_radius=1e-5, capture_speed=math.inf)
        pieces_t.append(tr.t + t_used)
        pieces_y.append(tr.y)
        t_used += float(tr.t[-1])
        if tr.termination is not Termination.SECTION_EVENT:
            return tr, np.concatenate(pieces_t), np.concatenate(pieces_y), None
        state = tr.events[0].state
        if float(torus_distance(state, avoid)) > 1e-3:
            return tr, np.concatenate(pieces_t), np.concatenate(pieces_y), state
        y = state
    return tr, np.concatenate(pieces_t), np.concatenate(pieces_y), None


def compute_separatrices(system: RotatorSystem, saddle: Equilibrium, t_max: float = 200.0,
                         equilibria: Sequence[Equilibrium] | None = None, *,
                         eps: float = SEPARATRIX_OFFSET, rtol: float = DEFAULT_RTOL,
                         atol: float = DEFAULT_ATOL) -> list[Separatrix]:
    """The four branches of the invariant manifolds of ``saddle``."""
    if saddle.kind is not EqClass.SADDLE:
        raise ValueError("separatrices need a saddle")
    if equilibria is None:
        equilibria = find_equilibria(system)
    others_idx = [i for i, e in enumerate(equilibria)
                  if torus_distance(e.position, saddle.position) > 1e-8]
    others = np.array([equilibria[i].position for i in others_idx]).reshape(-1, 2)
    reversible = system.is_reversible
    out = []
    for branch in ("unstable+", "unstable-", "stable+", "stable-"):
        start, backward = _branch_start(saddle, branch, eps)
        if reversible:
            tr, ts, ys, crossing = _first_fix_r_crossing(system, start, t_max, backward,
                                                         saddle.position, others, rtol, atol)
        else:
            tr = integrate(system, start, t_max, rtol=rtol, atol=atol, backward=backward,
                           sinks=others, capture_radius=1e-5, capture_speed=math.inf)
            ts, ys, crossing = tr.t, tr.y, None
        path = Trajectory(ts, ys, rtol, atol, tr.termination, [], tr.capture_index, backward)
        if tr.termination is Termination.SINK_CAPTURE:
            sep = Separatrix(saddle, branch, path, "reachesEquilibrium",
                             target=others_idx[tr.capture_index])
        elif crossing is not None:
            kind = "closesHomoclinic" if saddle.membership.in_fix_r else "crossesFixR"
            sep = Separatrix(saddle, branch, path, kind, crossing=crossing)
        else:
            sep = Separatrix(saddle, branch, path, "timeLimit")
        out.append(sep)
    return out


# ----------------------------------------------------------------------------
# region classification
# ----------------------------------------------------------------------------

DISSIPATIVE = "dissipative"
ROTATION = "rotation"
LIBRATION = "libration"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class RegionLabel:
    kind: str
    sink: int | None = None
    p: int = 0
    q: int = 0
    orientation: str | None = None  # "CW" / "CCW" for librations
    closure: float = field(default=math.nan, compare=False)
    period: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        if self.kind == ROTATION and (self.p, self.q) == (0, 0):
            raise ValueError("a rotation needs non-zero winding")
        if self.kind == LIBRATION and (self.p, self.q) != (0, 0):
            raise ValueError("a libration has zero winding")

    @property
    def code(self) -> str:
        if self.kind == LIBRATION:
            return f"libration_{self.orientation.lower()}"
        return self.kind

    @property
    def conservative(self) -> bool:
        return self.kind in (ROTATION, LIBRATION)

    def key(self) -> tuple:
        return (self.kind, self.sink, self.p, self.q, self.orientation)


@dataclass(frozen=True)
class ClassifyConfig:
    t_max: float = 500.0
    closure_tol: float = 1e-4
    transient: float = 200.0
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    capture_radius: float = 1e-4
    capture_speed: float = 1e-9


def _closed_label(traj: Trajectory, t0: float, t1: float, start, end, closure: float,
                  cfg: ClassifyConfig) -> RegionLabel:
    turns = (np.asarray(end) - np.asarray(start)) / TWO_PI
    rounded = np.round(turns)
    if np.max(np.abs(turns - rounded)) >= 0.01:
        return RegionLabel(UNDETERMINED, closure=closure)
    p, q = int(rounded[0]), int(rounded[1])
    period = t1 - t0
    if (p, q) != (0, 0):
        return RegionLabel(ROTATION, p=p, q=q, closure=closure, period=period)
    mask = (traj.t >= t0) & (traj.t <= t1)
    loop = np.vstack([np.asarray(start)[None, :], traj.y[mask], np.asarray(end)[None, :]])
    area = shoelace_area(loop)
    return RegionLabel(LIBRATION, orientation="CCW" if area > 0 else "CW",
                       closure=closure, period=period)


def classify_cell(system: RotatorSystem, ic, cfg: ClassifyConfig = ClassifyConfig(),
                  sinks: np.ndarray | None = None) -> RegionLabel:
    """Label the orbit through ``ic``: sink basin, rotation, libration or undetermined.

    Reversible fields close an orbit on its third crossing of the anti-diagonal
    (two crossings make it symmetric and periodic) or on returning to ``ic``,
    whichever is first. Other fields are run through a transient and then
    checked for a close return to the post-transient point.
    """
    ic = np.asarray(ic, dtype=float)
    if sinks is None:
        sinks = np.array([e.position for e in find_equilibria(system)
                          if e.kind is EqClass.SINK]).reshape(-1, 2)
    common = dict(rtol=cfg.rtol, atol=cfg.atol, sinks=sinks,
                  capture_radius=cfg.capture_radius, capture_speed=cfg.capture_speed)
    if system.is_reversible:
        events = [SectionSpec.fix_r(stop_after=3),
                  SectionSpec.approach(ic, radius=cfg.closure_tol, stop_after=1)]
        tr = integrate(system, ic, cfg.t_max, events=events, **common)
        if tr.termination is Termination.SINK_CAPTURE:
            return RegionLabel(DISSIPATIVE, sink=tr.capture_index)
        if tr.termination is not Termination.SECTION_EVENT:
            return RegionLabel(UNDETERMINED)
        last = tr.events[-1]
        if last.section == 1:
            closure = float(torus_distance(last.state, ic))
            return _closed_label(tr, 0.0, last.t, ic, last.state, closure, cfg)
        crossings = tr.events_of(0)
        first, third = crossings[0], crossings[2]
        closure = float(torus_distance(third.state, first.state))
        if closure >= cfg.closure_tol:
            return RegionLabel(UNDETERMINED, closure=closure)
        return _closed_label(tr, first.t, third.t, first.state, third.state, closure, cfg)

    t_left = cfg.t_max
    anchor = ic
    if cfg.transient > 0:
        tr = integrate(system, ic, min(cfg.transient, t_left), record=False, **common)
        if tr.termination is Termination.SINK_CAPTURE:
            return RegionLabel(DISSIPATIVE, sink=tr.capture_index)
        anchor = tr.end
        t_left -= cfg.transient
    if t_left <= 0:
        return RegionLabel(UNDETERMINED)
    tr = integrate(system, anchor, t_left,
                   events=[SectionSpec.approach(anchor, radius=cfg.closure_tol, stop_after=1)],
                   **common)
    if tr.termination is Termination.SINK_CAPTURE:
        return RegionLabel(DISSIPATIVE, sink=tr.capture_index)
    if tr.termination is not Termination.SECTION_EVENT:
        return RegionLabel(UNDETERMINED)
    ev = tr.events[-1]
    closure = float(torus_distance(ev.state, anchor))
    return _closed_label(tr, 0.0, ev.t, anchor, ev.state, closure, cfg)


@dataclass
class RegionMap:
    shape: tuple[int, int]
    window: tuple[float, float, float, float]
    params: dict
    labels: list[RegionLabel]
    sinks: np.ndarray
    label_name: str = ""

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x0, x1, y0, y1 = self.window
        n1, n2 = self.shape
        return (x0 + (np.arange(n1) + 0.5) * (x1 - x0) / n1,
                y0 + (np.arange(n2) + 0.5) * (y1 - y0) / n2)

    def label_at(self, i: int, j: int) -> RegionLabel:
        return self.labels[i * self.shape[1] + j]

    def grid(self) -> list[list[RegionLabel]]:
        n1, n2 = self.shape
        return [[self.labels[i * n2 + j] for j in range(n2)] for i in range(n1)]

    def closure(self) -> np.ndarray:
        return np.array([lab.closure for lab in self.labels]).reshape(self.shape)

    def kinds(self) -> np.ndarray:
        return np.array([lab.kind for lab in self.labels]).reshape(self.shape)

    def fraction(self, kind: str) -> float:
        return sum(1 for lab in self.labels if lab.kind == kind) / len(self.labels)

    def count(self, kind: str) -> int:
        return sum(1 for lab in self.labels if lab.kind == kind)

    def components(self, kind: str | None = None, periodic: bool = False) -> list[list[tuple[int, int]]]:
        """4-neighbour connected groups of equal labels.

        With ``periodic`` the grid edges are glued, giving regions on the torus
        rather than on the drawn square.
        """
        n1, n2 = self.shape
        seen = np.zeros(self.shape, dtype=bool)
        groups = []
        for i in range(n1):
            for j in range(n2):
                lab = self.label_at(i, j)
                if seen[i, j] or (kind is not None and lab.kind != kind):
                    continue
                key = lab.key()
                stack = [(i, j)]
                seen[i, j] = True
                group = []
                while stack:
                    a, b = stack.pop()
                    group.append((a, b))
                    for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        u, v = a + da, b + db
                        if periodic:
                            u, v = u % n1, v % n2
                        elif not (0 <= u < n1 and 0 <= v < n2):
                            continue
                        if not seen[u, v] and self.label_at(u, v).key() == key:
                            seen[u, v] = True
                            stack.append((u, v))
                groups.append(group)
        return groups

    def to_csv(self, path) -> None:
        xs, ys = self.coords()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "phi1", "phi2", "label", "p", "q", "closure_dist"])
            for i, x in enumerate(xs):
                for j, y in enumerate(ys):
                    lab = self.label_at(i, j)
                    cd = "" if math.isnan(lab.closure) else f"{lab.closure:.6g}"
                    writer.writerow([i, j, f"{x:.12g}", f"{y:.12g}", lab.code, lab.p, lab.q, cd])


def region_map(system: RotatorSystem, grid_n: int = 64, cfg: ClassifyConfig = ClassifyConfig(),
               window: tuple[float, float, float, float] = (0.0, TWO_PI, 0.0, TWO_PI),
               equilibria: Sequence[Equilibrium] | None = None,
               threads: int | None = None) -> RegionMap:
    """Classify the cell centres of a ``grid_n x grid_n`` grid over ``window``."""
    if grid_n < 16:
        raise ValueError("grid_n must be at least 16")
    if equilibria is None:
        equilibria = find_equilibria(system)
    sinks = np.array([e.position for e in equilibria if e.kind is EqClass.SINK]).reshape(-1, 2)
    rm = RegionMap((grid_n, grid_n), window, system.param_dict, [], sinks, system.label)
    xs, ys = rm.coords()
    points = [(x, y) for x in xs for y in ys]

    def job(pt):
        return classify_cell(system, pt, cfg, sinks)

    n_threads = threads or thread_count()
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            rm.labels = list(pool.map(job, points))
    else:
        rm.labels = [job(pt) for pt in points]
    return rm


def reversal_image_label(label: RegionLabel) -> RegionLabel:
    """Label expected at ``R(p)`` given the label at ``p``.

    ``R`` reverses both time and the orientation of the plane, so a
    libration keeps its sense of turning; a rotation's displacement
    ``(d1, d2)`` becomes ``(d2, d1)``.
    """
    if label.kind == ROTATION:
        return replace(label, p=label.q, q=label.p)
    return label


def reversal_index(i: int, j: int, n: int) -> tuple[int, int]:
    """Grid index of ``R`` applied to cell ``(i, j)`` on the default window."""
    return (n - 1 - j) % n, (n - 1 - i) % n


# ----------------------------------------------------------------------------
# saddle-connection shooting
# ----------------------------------------------------------------------------

FIX_R = "fixR"


@dataclass
class Miss:
    value: float
    fine: bool
    hit: np.ndarray | None = None


def connection_miss(system: RotatorSystem, from_saddle: Equilibrium, target,
                    branch: str = "unstable+", t_max: float = 200.0, *,
                    section_radius: float = 0.05, rtol: float = DEFAULT_RTOL,
                    atol: float = DEFAULT_ATOL, detail: bool = False):
    """Signed miss of an unstable branch of ``from_saddle`` against ``target``.

    For a saddle target the branch is stopped on a short transversal placed
    ``section_radius`` along each stable direction of the target; the miss is
    the offset along that transversal from where the target's stable branch
    (integrated backwards) crosses it, so it is smooth and vanishes exactly
    at a connection. Branches that never reach the transversals fall back to
    the signed distance at closest approach.

    For ``target == "fixR"`` the miss is the component of the velocity along
    the anti-diagonal at the first crossing, normalised by speed: zero for
    every crossing orbit of a reversible field.
    """
    if from_saddle.kind is not EqClass.SADDLE:
        raise ValueError("shooting starts from a saddle")
    if not branch.startswith("unstable"):
        raise ValueError("shoot along an unstable branch")
    start, _ = _branch_start(from_saddle, branch, SEPARATRIX_OFFSET)

    if isinstance(target, str):
        if target != FIX_R:
            raise ValueError(f"unknown target {target!r}")
        _tr, _ts, _ys, crossing = _first_fix_r_crossing(
            system, start, t_max, False, from_saddle.position, np.zeros((0, 2)), rtol, atol)
        if crossing is None:
            raise NoApproach("branch never crosses the anti-diagonal")
        v = system.rhs(crossing)
        value = float((v[0] - v[1]) / (math.sqrt(2.0) * np.linalg.norm(v)))
        return Miss(value, True, crossing) if detail else value

    s2 = target.position
    _unstable, stable = saddle_directions(target)
    sections = []
    for sigma in (1.0, -1.0):
        center = s2 + sigma * section_radius * stable
        sections.append(SectionSpec.segment(center, -sigma * stable, section_radius,
                                            direction=1, stop_after=1))
    approach = SectionSpec.approach(s2, radius=0.5)
    tr = integrate(system, start, t_max, rtol=rtol, atol=atol,
                   events=sections + [approach], record=False)
    hits = [e for e in tr.events if e.section < 2]
    if hits:
        hit = hits[0]
        sec = sections[hit.section]
        sigma = 1.0 if hit.section == 0 else -1.0
        back_start = s2 + sigma * SEPARATRIX_OFFSET * stable
        back_sec = SectionSpec.segment(sec.center, sec.normal, 2 * section_radius,
                                       direction=0, stop_after=1)
        back = integrate(system, back_start, 50.0, rtol=rtol, atol=atol, backward=True,
                         events=[back_sec], record=False)
        if not back.events:
            raise NoApproach("stable branch of the target leaves the section window")
        tangent = np.array([-sec.normal[1], sec.normal[0]])
        u_hit = float(centered(hit.state - np.asarray(sec.center)) @ tangent)
        u_man = float(centered(back.events[0].state - np.asarray(sec.center)) @ tangent)
        value = u_hit - u_man
        return Miss(value, True, hit.state) if detail else value
    approaches = [e for e in tr.events if e.section == 2]
    if not approaches:
        raise NoApproach("branch never comes within 0.5 of the target")
    best = min(approaches, key=lambda e: float(torus_distance(e.state, s2)))
    v = system.rhs(best.state)
    v = v / np.linalg.norm(v)
    disp = centered(s2 - best.state)
    value = -float(v[0] * disp[1] - v[1] * disp[0])
    return Miss(value, False, best.state) if detail else value


@dataclass
class ConnectionTemplate:
    """Builds ``(system, from_saddle, target)`` for a free parameter value.

    Saddles are picked as the ones nearest to the reference positions, so a
    template follows the same pair of saddles through a bracket.
    """

    build: Callable[[float], RotatorSystem]
    from_ref: np.ndarray
    target_ref: np.ndarray | str
    branch: str = "unstable+"
    t_max: float = 200.0

    def resolve(self, value: float):
        system = self.build(value)

        def track(ref):
            roots, res = newton(system, [ref])
            if res[0] > 1e-10 or float(torus_distance(roots[0], ref)) > 0.5:
                raise NoApproach("tracked saddle disappeared")
            eq = classify_equilibrium(system, roots[0])
            if eq.kind is not EqClass.SADDLE:
                raise NoApproach("tracked equilibrium is no longer a saddle")
            return eq

        src = track(self.from_ref)
        tgt = self.target_ref if isinstance(self.target_ref, str) else track(self.target_ref)
        if not isinstance(tgt, str) and float(torus_distance(src.position, tgt.position)) < 1e-6:
            raise NoApproach("source and target saddles coincide")
        return system, src, tgt

    def miss(self, value: float) -> float:
        system, src, tgt = self.resolve(value)
        return connection_miss(system, src, tgt, self.branch, self.t_max)

    def follow(self, value: float) -> "ConnectionTemplate":
        """Re-anchor the saddle references at ``value``."""
        _system, src, tgt = self.resolve(value)
        target_ref = tgt if isinstance(tgt, str) else tgt.position.copy()
        return replace(self, from_ref=src.position.copy(), target_ref=target_ref)


@dataclass
class ConnectionResult:
    value: float
    miss: float
    iterations: int
    bracket: tuple[float, float]
    degenerate_family: bool = False


def find_connection(template: ConnectionTemplate, bracket: tuple[float, float],
                    tol: float = 1e-10, max_iter: int = 200,
                    family_tol: float = 1e-8) -> ConnectionResult:
    """Bisection on the miss function until the bracket is narrower than ``tol``.

    If the miss is below ``family_tol`` at both ends and the midpoint, the
    connection persists across the whole bracket (a symmetry-protected
    family); the result is flagged ``degenerate_family`` instead of bisected.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    m_lo, m_hi = template.miss(lo), template.miss(hi)
    if abs(m_lo) < family_tol and abs(m_hi) < family_tol:
        mid = 0.5 * (lo + hi)
        m_mid = template.miss(mid)
        if abs(m_mid) < family_tol:
            return ConnectionResult(mid, m_mid, 0, (lo, hi), degenerate_family=True)
    if m_lo == 0.0:
        return ConnectionResult(lo, 0.0, 0, (lo, lo))
    if m_hi == 0.0:
        return ConnectionResult(hi, 0.0, 0, (hi, hi))
    if (m_lo > 0) == (m_hi > 0):
        raise NoSignChange(f"miss has the same sign at both ends ({m_lo:.3g}, {m_hi:.3g})")
    it = 0
    while abs(hi - lo) >= tol and it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        m_mid = template.miss(mid)
        if m_mid == 0.0:
            lo = hi = mid
            m_lo = m_hi = 0.0
            break
        if (m_mid > 0) == (m_lo > 0):
            lo, m_lo = mid, m_mid
        else:
            hi, m_hi = mid, m_mid
    if abs(m_lo) <= abs(m_hi):
        root, miss = lo, m_lo
    else:
        root, miss = hi, m_hi
    return ConnectionResult(root, miss, it, (lo, hi))


def scan_miss(template: ConnectionTemplate, values: Sequence[float]) -> list[float]:
    """Miss values along a parameter list; ``nan`` where the shot is undefined."""
    out = []
    for v in values:
        try:
            out.append(template.miss(v))
        except (NoApproach, ValueError):
            out.append(math.nan)
    return out


def sign_changes(values: Sequence[float], misses: Sequence[float]) -> list[tuple[float, float]]:
    brackets = []
    for (v0, m0), (v1, m1) in zip(zip(values, misses), zip(values[1:], misses[1:])):
        if math.isnan(m0) or math.isnan(m1):
            continue
        if (m0 > 0) != (m1 > 0):
            brackets.append((v0, v1))
    return brackets


def reversal_of(p) -> np.ndarray:
    return canonical(REVERSAL.apply(p))
