"""Fixed points: location, deduplication, classification and closed-form loci."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import (REVERSAL, TWO_PI, RotatorSystem, canonical, centered,
                    torus_distance)

DEDUP_RADIUS = 1e-6
NEAR_SINGULAR = 1e-4
EIG_TOL = 1e-8
MEMBER_TOL = 1e-8


class EqClass(enum.Enum):
    SINK = "sink"
    SOURCE = "source"
    SADDLE = "saddle"
    CENTER = "center"
    DEGENERATE = "degenerate"
    UNDETERMINED = "undetermined"  # pure imaginary pair off Fix R or in a non-reversible field


class Degeneracy(enum.Enum):
    NILPOTENT = "nilpotentDoubleZero"
    FULL_ZERO = "fullZero"
    OTHER = "simpleZero"


@dataclass(frozen=True)
class Membership:
    in_fix_r: bool
    in_fix_r2: bool
    in_synchrony: bool


@dataclass
class Equilibrium:
    position: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    kind: EqClass
    membership: Membership
    degeneracy: Degeneracy | None = None

    @property
    def trace(self) -> float:
        return float(np.trace(self.jacobian))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.jacobian))

    def row(self) -> list:
        ev = self.eigenvalues
        m = self.membership
        return [f"{self.position[0]:.12g}", f"{self.position[1]:.12g}",
                f"{ev[0].real:.12g}", f"{ev[0].imag:.12g}",
                f"{ev[1].real:.12g}", f"{ev[1].imag:.12g}",
                self.kind.value, int(m.in_fix_r), int(m.in_fix_r2), int(m.in_synchrony)]


CSV_HEADER = ["phi1", "phi2", "re_ev1", "im_ev1", "re_ev2", "im_ev2",
              "class", "inFixR", "inFixR2", "inSync"]


def write_csv(equilibria, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for eq in equilibria:
            writer.writerow(eq.row())


def membership(p, tol: float = MEMBER_TOL) -> Membership:
    """Distance tests against ``phi1 = -phi2``, ``phi1 = phi2 + pi`` and ``phi1 = phi2``."""
    x1, x2 = float(p[0]), float(p[1])
    # torus distance to the line phi1 - s*phi2 = c along the normal
    on_fix_r = abs(centered(x1 + x2)) / math.sqrt(2.0) < tol
    on_fix_r2 = abs(centered(x1 - x2 - math.pi)) / math.sqrt(2.0) < tol
    on_sync = abs(centered(x1 - x2)) / math.sqrt(2.0) < tol
    return Membership(bool(on_fix_r), bool(on_fix_r2), bool(on_sync))


def _eigenvalues(jac: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvals(jac).astype(complex)
    return ev[np.lexsort((ev.imag, ev.real))]


def classify_equilibrium(system: RotatorSystem, p, reversible_hint: bool | None = None,
                         tol: float = 1e-8) -> Equilibrium:
    """Classify the fixed point ``p`` by the trace/determinant policy."""
    p = canonical(np.asarray(p, dtype=float))
    res = float(np.linalg.norm(system.rhs(p)))
    if res >= tol:
        raise ValueError(f"not an equilibrium: |F(p)| = {res:.3g}")
    if reversible_hint is None:
        reversible_hint = system.is_reversible
    jac = system.jacobian(p)
    tr = float(np.trace(jac))
    det = float(np.linalg.det(jac))
    member = membership(p)
    degeneracy = None
    if det < -EIG_TOL:
        kind = EqClass.SADDLE
    elif abs(det) <= EIG_TOL:
        kind = EqClass.DEGENERATE
        if np.linalg.norm(jac) < EIG_TOL:
            degeneracy = Degeneracy.FULL_ZERO
        elif abs(tr) <= 1e-6 * max(1.0, float(np.linalg.norm(jac))):
            degeneracy = Degeneracy.NILPOTENT
        else:
            degeneracy = Degeneracy.OTHER
    elif tr < -EIG_TOL:
        kind = EqClass.SINK
    elif tr > EIG_TOL:
        kind = EqClass.SOURCE
    elif reversible_hint and member.in_fix_r:
        kind = EqClass.CENTER
    else:
        kind = EqClass.UNDETERMINED
    return Equilibrium(p, jac, _eigenvalues(jac), kind, member, degeneracy)


def newton(system: RotatorSystem, seeds, max_iter: int = 50, tol: float = 1e-13):
    """Vectorised damped Newton from many seeds; returns (roots, residuals)."""
    x = np.array(seeds, dtype=float).reshape(-1, 2)
    f = system.rhs(x)
    res = np.linalg.norm(f, axis=1)
    for _ in range(max_iter):
        active = res > tol
        if not active.any():
            break
        jac = system.jacobian(x[active])
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        fa = f[active]
        safe = np.abs(det) > 1e-300
        det = np.where(safe, det, 1.0)
        dx = np.empty_like(fa)
        dx[:, 0] = (jac[:, 1, 1] * fa[:, 0] - jac[:, 0, 1] * fa[:, 1]) / det
        dx[:, 1] = (-jac[:, 1, 0] * fa[:, 0] + jac[:, 0, 0] * fa[:, 1]) / det
        dx[~safe] = 0.0
        # cap wild steps from near-singular Jacobians
        norm = np.linalg.norm(dx, axis=1)
        big = norm > 1.0
        dx[big] /= norm[big, None]
        step = np.ones(len(dx))
        xa = x[active]
        ra = res[active]
        trial = xa - dx
        rt = np.linalg.norm(system.rhs(trial), axis=1)
        for _halving in range(8):
            worse = rt > ra
            if not worse.any():
                break
            step[worse] *= 0.5
            trial[worse] = xa[worse] - step[worse, None] * dx[worse]
            rt[worse] = np.linalg.norm(system.rhs(trial[worse]), axis=1)
        x[active] = trial
        f[active] = system.rhs(trial)
        res[active] = np.linalg.norm(f[active], axis=1)
    return canonical(x), res


def _augmented(system: RotatorSystem, x: np.ndarray) -> np.ndarray:
    return np.append(system.rhs(x), np.linalg.det(system.jacobian(x)))


def polish_degenerate(system: RotatorSystem, p, iters: int = 30) -> np.ndarray:
    """Gauss-Newton on ``(F, det DF) = 0`` for a root with a singular Jacobian.

    Plain Newton stalls at ``|p - p*| ~ sqrt(eps)`` there; the augmented map
    has a regular zero at a generic fold point. The polished point is kept
    only if it improves both the residual and the determinant.
    """
    x = np.asarray(p, dtype=float).copy()
    best = x.copy()
    r0 = _augmented(system, x)
    best_score = float(np.linalg.norm(r0))
    h = 1e-6
    for _ in range(iters):
        r = _augmented(system, x)
        jac = np.empty((3, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            jac[:, i] = (_augmented(system, x + e) - _augmented(system, x - e)) / (2 * h)
        dx, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        x = x + dx
        score = float(np.linalg.norm(_augmented(system, x)))
        if score < best_score:
            best, best_score = x.copy(), score
        if np.linalg.norm(dx) < 1e-15:
            break
    r_best = _augmented(system, best)
    if np.linalg.norm(r_best[:2]) <= max(np.linalg.norm(r0[:2]), 1e-14) and \
            abs(r_best[2]) <= abs(r0[2]):
        return canonical(best)
    return canonical(np.asarray(p, dtype=float))


def _dedupe(points: np.ndarray, radius: float) -> list[np.ndarray]:
    order = np.lexsort((points[:, 1], points[:, 0]))
    kept: list[np.ndarray] = []
    for p in points[order]:
        if not kept or np.min(torus_distance(np.array(kept), p)) >= radius:
            kept.append(p)
    return kept


def find_equilibria(system: RotatorSystem, grid_n: int = 24, tol: float = 1e-10,
                    dedup_radius: float = DEDUP_RADIUS) -> list[Equilibrium]:
    """Newton from a ``grid_n x grid_n`` seed grid, deduplicated and classified.

    Roots with a near-singular Jacobian converge only linearly and scatter
    around the true point; these are merged with ``sqrt(dedup_radius)``.
    """
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    g = (np.arange(grid_n) + 0.5) * TWO_PI / grid_n
    seeds = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    roots, res = newton(system, seeds)
    roots = roots[res < tol]
    if len(roots) == 0:
        return []
    dets = np.abs(np.linalg.det(system.jacobian(roots)))
    singular = dets < 1e-6
    kept = _dedupe(roots[~singular], dedup_radius) if (~singular).any() else []
    # Newton stalls ~sqrt(tol) away from a fold, where det J is small but above
    # the singular cut; polishing only moves a point if both residuals improve
    kept = [polish_degenerate(system, p)
            if abs(np.linalg.det(system.jacobian(p))) < NEAR_SINGULAR else p for p in kept]
    kept = _dedupe(np.array(kept), dedup_radius) if kept else []
    for p in _dedupe(roots[singular], math.sqrt(dedup_radius)) if singular.any() else []:
        p = polish_degenerate(system, p)
        if all(torus_distance(p, q) >= math.sqrt(dedup_radius) for q in kept):
            kept.append(p)
    kept.sort(key=lambda q: (round(q[0], 9), round(q[1], 9)))
    reversible = system.is_reversible
    return [classify_equilibrium(system, p, reversible, tol=max(tol, 1e-10) * 10)
            for p in kept]


def count_near(equilibria, center, radius: float, kinds=None) -> int:
    return sum(1 for e in equilibria
               if torus_distance(e.position, center) < radius
               and (kinds is None or e.kind in kinds))


def equilibrium_lines(system: RotatorSystem, samples: int = 2048) -> list[float]:
    """Phase differences ``psi`` carrying a whole diagonal line of equilibria.

    Only meaningful for constant local dynamics, where the field depends on
    ``phi1 - phi2`` alone and both components must vanish together.
    """
    if not system.is_rotationally_symmetric:
        return []
    c1, c2 = system.f1.constant, system.f2.constant

    def v1(psi):
        return c1 + float(system.g1(psi))

    def v2(psi):
        return c2 + float(system.g2(-psi))

    grid = np.linspace(0.0, TWO_PI, samples + 1)
    vals = np.array([v1(p) for p in grid])
    found = []
    for i in range(samples):
        lo, hi = grid[i], grid[i + 1]
        if vals[i] == 0.0:
            root = lo
        elif vals[i] * vals[i + 1] < 0:
            root = brentq(v1, lo, hi, xtol=1e-15)
        else:
            continue
        if abs(v2(root)) < 1e-10 and all(abs(centered(root - r)) > 1e-9 for r in found):
            found.append(float(canonical(root)))
    return sorted(found)


# ----------------------------------------------------------------------------
# closed-form bifurcation loci
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class LocusResult:
    values: tuple[float, ...]
    diagnostic: str = ""


LOCUS_IDS = ("caseI-saddle-center", "caseI-pitchfork", "caseII-saddle-center",
             "caseII-sink-source")


def case_i_saddle_center_branches(kappa: float, a: float = 1.0) -> tuple[float, float]:
    """Non-negative ``omega`` of the outer and inner case I saddle-center branches.

    Double roots of ``h(x) = omega + a cos x - kappa sin 2x`` on the
    anti-diagonal; ``h' = 0`` gives ``4 kappa s^2 - a s - 2 kappa = 0`` for
    ``s = sin x``. The inner branch is ``nan`` where it does not exist. The
    locus is symmetric under ``omega -> -omega``.
    """
    if a == 0.0 or kappa == 0.0:
        return math.nan, math.nan
    k = kappa / abs(a)
    root = math.sqrt(1.0 + 32.0 * k * k)
    outer = (3.0 + root) * math.sqrt(2.0 * (16.0 * k * k - 1.0 + root)) / (32.0 * abs(k))
    inner_arg = 16.0 * k * k - 1.0 - root
    inner = math.nan
    if inner_arg >= 0.0:
        inner = (root - 3.0) * math.sqrt(2.0 * inner_arg) / (32.0 * abs(k))
    return abs(a) * outer, abs(a) * inner


def _case_i_saddle_center(kappa: float, a: float) -> LocusResult:
    if a == 0.0:
        return LocusResult((), "a = 0 carries lines of equilibria instead")
    if kappa == 0.0:
        return LocusResult((), "kappa = 0 has no saddle-center")
    outer, inner = case_i_saddle_center_branches(kappa, a)
    out = [outer]
    diag = ""
    if math.isnan(inner):
        diag = "second branch needs 16 kappa^2 >= a^2 + a sqrt(a^2 + 32 kappa^2)"
    else:
        out.append(inner)
    vals = sorted(set(out) | {-v for v in out})
    return LocusResult(tuple(vals), diag)


def analytic_locus(curve_id: str, abscissa: float, a: float = 1.0,
                   omega: float | None = None) -> LocusResult:
    """Ordinates of a closed-form bifurcation curve at ``abscissa``.

    ``caseI-saddle-center`` and ``caseII-saddle-center`` return ``omega``
    values at coupling ``abscissa``; ``caseI-pitchfork`` returns ``omega = +-a``;
    ``caseII-sink-source`` returns the couplings ``kappa = omega +- a`` at
    ``omega = abscissa``.
    """
    if curve_id == "caseI-saddle-center":
        return _case_i_saddle_center(abscissa, a)
    if curve_id == "caseI-pitchfork":
        return LocusResult(tuple(sorted({-abs(a), abs(a)})))
    if curve_id == "caseII-saddle-center":
        kappa = abscissa
        if abs(kappa) <= abs(a) / 4.0:
            return LocusResult((), "needs |kappa| > |a|/4")
        return LocusResult((-a * a / (8.0 * kappa) - kappa,))
    if curve_id == "caseII-sink-source":
        return LocusResult(tuple(sorted({abscissa - a, abscissa + a})))
    raise ValueError(f"unknown curve {curve_id!r}")


def fix_r_double_roots_case_i(kappa: float, a: float = 1.0) -> list[tuple[float, float]]:
    """``(x, omega)`` pairs where ``h`` has a double root on the anti-diagonal.

    Solved directly from ``h' = 0`` without the closed form, as a cross-check.
    """
    out = []
    if kappa == 0.0:
        return out
    disc = a * a + 32.0 * kappa * kappa
    for s in ((a + math.sqrt(disc)) / (8.0 * kappa), (a - math.sqrt(disc)) / (8.0 * kappa)):
        if abs(s) > 1.0:
            continue
        for x in (math.asin(s), math.pi - math.asin(s)):
            omega = -a * math.cos(x) + kappa * math.sin(2.0 * x)
            out.append((x, omega))
    return out


def reversal_partner_residual(equilibria) -> float:
    """Largest distance between a sink and the reversal image of a source."""
    sinks = [e for e in equilibria if e.kind is EqClass.SINK]
    sources = [e for e in equilibria if e.kind is EqClass.SOURCE]
    worst = 0.0
    for s in sinks:
        img = REVERSAL.apply(s.position)
        worst = max(worst, min((float(torus_distance(img, q.position)) for q in sources),
                               default=math.inf))
    return worst
