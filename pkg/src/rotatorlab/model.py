"""Vector fields of two coupled rotators on the torus.

Every local and coupling function is held as a finite Fourier series, so
evenness and oddness (the ingredients of time reversibility) can be read off
the coefficients exactly instead of being probed numerically.

Points on the torus are plain ``(..., 2)`` float arrays. Angles are
canonicalised to ``[0, 2*pi)``; "lifted" points are the same arrays left
unwrapped on the universal cover.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------------
# torus helpers
# ----------------------------------------------------------------------------

def canonical(p) -> np.ndarray:
    """Wrap angles into ``[0, 2*pi)``."""
    out = np.mod(np.asarray(p, dtype=float), TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def centered(x) -> np.ndarray:
    """Wrap angles into ``[-pi, pi)``."""
    return np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi


def torus_distance(p, q) -> np.ndarray:
    """Euclidean distance minimised over all 2*pi shifts."""
    d = centered(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    return np.sqrt(np.sum(d * d, axis=-1))


def lift_offsets(lifted, reference) -> np.ndarray:
    """Integer lattice offsets between a lifted point and its torus reference.

    Raises ValueError when the two do not project to the same torus point.
    """
    diff = (np.asarray(lifted, dtype=float) - np.asarray(reference, dtype=float)) / TWO_PI
    k = np.round(diff)
    if np.any(np.abs(diff - k) > 1e-9):
        raise ValueError("lifted point does not project onto its reference")
    return k.astype(int)


# ----------------------------------------------------------------------------
# Fourier series
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class FourierSpec:
    """``constant + sum_k (c_k cos(k x) + s_k sin(k x))``.

    ``terms`` holds ``(k, c_k, s_k)`` triples with distinct harmonics ``k >= 1``.
    """

    constant: float = 0.0
    terms: tuple[tuple[int, float, float], ...] = ()

    def __post_init__(self):
        cleaned = []
        seen = set()
        for term in self.terms:
            k, c, s = term
            if int(k) != k or k < 1:
                raise ValueError(f"harmonic must be a positive integer, got {k!r}")
            if int(k) in seen:
                raise ValueError(f"duplicate harmonic {k}")
            seen.add(int(k))
            cleaned.append((int(k), float(c), float(s)))
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "terms", tuple(sorted(cleaned)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.constant)
        for k, c, s in self.terms:
            if c:
                out = out + c * np.cos(k * x)
            if s:
                out = out + s * np.sin(k * x)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, c, s in self.terms:
            if c:
                out = out - k * c * np.sin(k * x)
            if s:
                out = out + k * s * np.cos(k * x)
        return out

    @property
    def is_even(self) -> bool:
        return all(s == 0.0 for _, _, s in self.terms)

    @property
    def is_odd(self) -> bool:
        return self.constant == 0.0 and all(c == 0.0 for _, c, _ in self.terms)

    def coefficients(self) -> dict[int, tuple[float, float]]:
        """Harmonic -> (cos, sin) with all-zero harmonics dropped."""
        return {k: (c, s) for k, c, s in self.terms if c != 0.0 or s != 0.0}

    def same_as(self, other: "FourierSpec") -> bool:
        return self.constant == other.constant and self.coefficients() == other.coefficients()

    def __neg__(self) -> "FourierSpec":
        return FourierSpec(-self.constant, tuple((k, -c, -s) for k, c, s in self.terms))

    def __add__(self, other: "FourierSpec") -> "FourierSpec":
        acc: dict[int, list[float]] = {}
        for k, c, s in self.terms + other.terms:
            slot = acc.setdefault(k, [0.0, 0.0])
            slot[0] += c
            slot[1] += s
        return FourierSpec(self.constant + other.constant,
                           tuple((k, c, s) for k, (c, s) in acc.items()))

    def to_dict(self) -> dict:
        return {"constant": self.constant, "terms": [list(t) for t in self.terms]}

    @classmethod
    def from_dict(cls, data: dict) -> "FourierSpec":
        unknown = set(data) - {"constant", "terms"}
        if unknown:
            raise ValueError(f"unknown Fourier keys: {sorted(unknown)}")
        return cls(data.get("constant", 0.0), tuple(tuple(t) for t in data.get("terms", ())))


# ----------------------------------------------------------------------------
# the coupled system
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class RotatorSystem:
    """``phi1' = f1(phi1) + g1(phi1 - phi2)``, ``phi2' = f2(phi2) + g2(phi2 - phi1)``."""

    f1: FourierSpec
    f2: FourierSpec
    g1: FourierSpec
    g2: FourierSpec
    label: str = "fourier"
    params: tuple[tuple[str, float], ...] = field(default=(), compare=False)

    def rhs(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        x1, x2 = p[..., 0], p[..., 1]
        d = x1 - x2
        return np.stack([self.f1(x1) + self.g1(d), self.f2(x2) + self.g2(-d)], axis=-1)

    def jacobian(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        x1, x2 = p[..., 0], p[..., 1]
        d = x1 - x2
        dg1 = self.g1.derivative(d)
        dg2 = self.g2.derivative(-d)
        j11 = self.f1.derivative(x1) + dg1
        j22 = self.f2.derivative(x2) + dg2
        row1 = np.stack([j11, -dg1], axis=-1)
        row2 = np.stack([-dg2, j22], axis=-1)
        return np.stack([row1, row2], axis=-2)

    def divergence(self, p) -> np.ndarray:
        return np.trace(self.jacobian(p), axis1=-2, axis2=-1)

    @property
    def is_case_i(self) -> bool:
        """Identical even local dynamics, odd anti-reciprocal coupling."""
        return (self.f1.same_as(self.f2) and self.f1.is_even
                and self.g1.is_odd and self.g2.same_as(-self.g1))

    @property
    def is_case_ii(self) -> bool:
        """Identical even local dynamics, identical even coupling."""
        return (self.f1.same_as(self.f2) and self.f1.is_even
                and self.g1.is_even and self.g1.same_as(self.g2))

    @property
    def is_reversible(self) -> bool:
        return self.is_case_i or self.is_case_ii

    @property
    def is_rotationally_symmetric(self) -> bool:
        """Local dynamics constant, so the flow commutes with diagonal shifts."""
        return not self.f1.coefficients() and not self.f2.coefficients()

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(self.params)

    @cached_property
    def packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Dense coefficient arrays for the compiled integrator.

        Rows are ``f1, f2, g1, g2``; harmonics are zero padded.
        """
        specs = (self.f1, self.f2, self.g1, self.g2)
        width = max(1, max(len(s.terms) for s in specs))
        const = np.array([s.constant for s in specs])
        harm = np.zeros((4, width))
        cos_c = np.zeros((4, width))
        sin_c = np.zeros((4, width))
        for row, spec in enumerate(specs):
            for col, (k, c, s) in enumerate(spec.terms):
                harm[row, col] = k
                cos_c[row, col] = c
                sin_c[row, col] = s
        return const, harm, cos_c, sin_c

    def to_dict(self) -> dict:
        return {"label": self.label,
                "f1": self.f1.to_dict(), "f2": self.f2.to_dict(),
                "g1": self.g1.to_dict(), "g2": self.g2.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "RotatorSystem":
        unknown = set(data) - {"label", "f1", "f2", "g1", "g2"}
        if unknown:
            raise ValueError(f"unknown system keys: {sorted(unknown)}")
        specs = {k: FourierSpec.from_dict(data.get(k, {})) for k in ("f1", "f2", "g1", "g2")}
        return cls(label=data.get("label", "fourier"), **specs)


# ----------------------------------------------------------------------------
# named constructions
# ----------------------------------------------------------------------------

def _rotator(omega: float, a: float) -> FourierSpec:
    return FourierSpec(omega, ((1, a, 0.0),))


def sinusoidal(omega1: float, omega2: float, a1: float, a2: float,
               kappa1: float, kappa2: float, alpha: float = 0.0) -> RotatorSystem:
    """``phi_i' = omega_i + a_i cos(phi_i) + kappa_i sin(phi_j - phi_i + alpha)``.

    With ``d = phi_i - phi_j`` the coupling is
    ``kappa_i (sin(alpha) cos(d) - cos(alpha) sin(d))``.
    """
    sa, ca = math.sin(alpha), math.cos(alpha)
    g1 = FourierSpec(0.0, ((1, kappa1 * sa, -kappa1 * ca),))
    g2 = FourierSpec(0.0, ((1, kappa2 * sa, -kappa2 * ca),))
    params = (("omega1", omega1), ("omega2", omega2), ("a1", a1), ("a2", a2),
              ("kappa1", kappa1), ("kappa2", kappa2), ("alpha", alpha))
    return RotatorSystem(_rotator(omega1, a1), _rotator(omega2, a2), g1, g2,
                         label="sinusoidal", params=params)


def case_i(omega: float, a: float, kappa: float) -> RotatorSystem:
    """Anti-reciprocal odd coupling:
    ``phi1' = omega + a cos(phi1) - kappa sin(phi1 - phi2)``,
    ``phi2' = omega + a cos(phi2) + kappa sin(phi2 - phi1)``.
    """
    f = _rotator(omega, a)
    g = FourierSpec(0.0, ((1, 0.0, -kappa),))
    return RotatorSystem(f, f, g, -g, label="caseI",
                         params=(("omega", omega), ("a", a), ("kappa", kappa)))


def case_ii(omega: float, a: float, kappa: float) -> RotatorSystem:
    """Reciprocal even coupling:
    ``phi_i' = omega + a cos(phi_i) - kappa cos(phi_i - phi_j)``.
    """
    f = _rotator(omega, a)
    g = FourierSpec(0.0, ((1, -kappa, 0.0),))
    return RotatorSystem(f, f, g, g, label="caseII",
                         params=(("omega", omega), ("a", a), ("kappa", kappa)))


def harmonic(omega: float, p: float, n: int, kappa: float, r: float = 0.0,
             m: int = 1) -> RotatorSystem:
    """Anti-reciprocal system with higher harmonics:
    ``f(x) = omega - cos(x) - p cos(n x)``, ``g(x) = kappa (sin(x) + r sin(m x))``,
    with ``g1 = g`` and ``g2 = -g``.
    """
    f = FourierSpec(omega, ((1, -1.0, 0.0),)) + FourierSpec(0.0, ((int(n), -p, 0.0),))
    g = FourierSpec(0.0, ((1, 0.0, kappa),)) + FourierSpec(0.0, ((int(m), 0.0, kappa * r),))
    params = (("omega", omega), ("p", p), ("n", n), ("kappa", kappa), ("r", r), ("m", m))
    return RotatorSystem(f, f, g, -g, label="harmonic", params=params)


# ----------------------------------------------------------------------------
# symmetries
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetryAction:
    """Affine action ``p -> M p + shift`` on the torus, with a time sign."""

    matrix: tuple[tuple[int, int], tuple[int, int]]
    shift: tuple[float, float] = (0.0, 0.0)
    time_sign: int = -1
    name: str = ""

    def __post_init__(self):
        if self.time_sign not in (1, -1):
            raise ValueError("time_sign must be +1 or -1")

    @property
    def linear(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.linear.T + np.asarray(self.shift)

    def involution_residual(self, samples) -> float:
        q = self.apply(self.apply(samples))
        return float(np.max(torus_distance(q, samples)))


# phi -> (-phi2, -phi1), t -> -t; fixed set is the anti-diagonal
REVERSAL = SymmetryAction(((0, -1), (-1, 0)), (0.0, 0.0), -1, "R")
# second reversal of the anti-reciprocal system at omega = 0
REVERSAL_2 = SymmetryAction(((0, 1), (1, 0)), (math.pi, math.pi), -1, "R2")
# swap with half-turn shift; maps (a, kappa) -> (-a, -kappa) in the anti-reciprocal system
SWAP_SHIFT = SymmetryAction(((0, 1), (1, 0)), (math.pi, math.pi), 1, "gamma2")
# half-turn shift; maps a -> -a in both reversible families
HALF_TURN = SymmetryAction(((1, 0), (0, 1)), (math.pi, math.pi), 1, "gamma3")
# coordinate swap; symmetry of the reciprocal system, maps kappa -> -kappa in the
# anti-reciprocal one
MIRROR = SymmetryAction(((0, 1), (1, 0)), (0.0, 0.0), 1, "gamma_m")


def conjugacy_residual(source: RotatorSystem, target: RotatorSystem,
                       action: SymmetryAction, samples) -> float:
    """``max |F_target(g p) - time_sign * M F_source(p)|`` over the samples."""
    samples = np.asarray(samples, dtype=float)
    lhs = target.rhs(action.apply(samples))
    rhs = action.time_sign * (source.rhs(samples) @ action.linear.T)
    return float(np.max(np.abs(lhs - rhs)))


def reversibility_residual(system: RotatorSystem, action: SymmetryAction, samples) -> float:
    """``max |F(R p) + DR F(p)|``; zero (to rounding) for a true reversal."""
    if action.time_sign != -1:
        raise ValueError("a reversing symmetry must flip time")
    return conjugacy_residual(system, system, action, samples)


def random_points(n: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, TWO_PI, size=(n, 2))


# ----------------------------------------------------------------------------
# phase-difference reduction of the Kuramoto-Sakaguchi limit
# ----------------------------------------------------------------------------

def reduce_phase_difference(omega1: float, omega2: float, kappa1: float, kappa2: float,
                            alpha: float, a1: float = 0.0, a2: float = 0.0
                            ) -> tuple[float, float, float]:
    """Return ``(delta, amplitude, sigma)`` with
    ``psi' = delta - amplitude * cos(psi - sigma)`` for ``psi = phi1 - phi2``.

    Expanding the sinusoidal system gives
    ``psi' = delta + (k1 - k2) sin(alpha) cos(psi) - (k1 + k2) cos(alpha) sin(psi)``,
    hence ``A cos(sigma) = (k2 - k1) sin(alpha)`` and
    ``A sin(sigma) = (k1 + k2) cos(alpha)``. ``sigma`` is 0 when ``A`` vanishes.
    """
    if a1 != 0.0 or a2 != 0.0:
        raise ValueError("phase-difference reduction needs a1 = a2 = 0")
    delta = omega1 - omega2
    cos_part = (kappa2 - kappa1) * math.sin(alpha)
    sin_part = (kappa1 + kappa2) * math.cos(alpha)
    amplitude = math.hypot(cos_part, sin_part)
    if amplitude < 1e-15:
        return delta, 0.0, 0.0
    return delta, amplitude, math.atan2(sin_part, cos_part)


def phase_difference_rate(psi, omega1: float, omega2: float, kappa1: float,
                          kappa2: float, alpha: float) -> np.ndarray:
    """``psi'`` evaluated straight from the two sinusoidal equations (a = 0)."""
    sys = sinusoidal(omega1, omega2, 0.0, 0.0, kappa1, kappa2, alpha)
    psi = np.asarray(psi, dtype=float)
    pts = np.stack([psi, np.zeros_like(psi)], axis=-1)
    v = sys.rhs(pts)
    return v[..., 0] - v[..., 1]


def point_set(points: Iterable[Sequence[float]]) -> np.ndarray:
    arr = np.asarray(list(points), dtype=float)
    return arr.reshape(-1, 2)
