"""Radial solutions of the continuum free boundary problem

    Δu = λ·1{0 < u < k} − A·δ₀   in R^d,   u compactly supported,

which is the scaling limit of the single-source sandpile.  The solution is
piecewise: a shifted Green's function on the plateau |x| ≤ r₁ where u ≥ k,
and a Green's function plus a quadratic on the annulus r₁ < |x| ≤ r₂.
Matching values and gradients at r₁ and r₂ gives five equations in
(a₁, a₂, a₃, r₁, r₂); eliminating everything but r₁ leaves one scalar
equation with a unique positive root.

The sandpile limit uses λ = 2dm, A = 2d, k = 1/m (``RadialProblem.scaled``);
the unscaled problem has λ = m, A = 1 (``RadialProblem.unscaled``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import binom, gamma

from .errors import BracketError, InvalidConfig

DEFAULT_BRACKET = (1e-6, 1e3)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


def omega(d: int) -> float:
    """Normalising constant of the Green's kernel of -Δ.

    The kernel is omega(d)·|x|^{2-d} for d ≥ 3 and omega(2)·log|x| for d = 2,
    so omega(2) = -1/(2π) is the only negative value.
    """
    if d < 2:
        raise InvalidConfig(f"dimension must be at least 2, got {d}")
    if d == 2:
        return -1.0 / (2.0 * math.pi)
    return 1.0 / (d * (d - 2) * unit_ball_volume(d))


def green(r, d: int):
    """Radial profile of the kernel without its constant: r^{2-d}, or log r in d = 2."""
    r = np.asarray(r, dtype=np.float64)
    return np.log(r) if d == 2 else r ** (2 - d)


@dataclass(frozen=True)
class RadialProblem:
    d: int
    lam: float
    A: float
    k: float

    def __post_init__(self):
        if self.d < 2:
            raise InvalidConfig(f"dimension must be at least 2, got {self.d}")
        for name in ("lam", "A", "k"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def unscaled(cls, d: int, m: float, k: float) -> "RadialProblem":
        return cls(d, float(m), 1.0, float(k))

    @classmethod
    def scaled(cls, d: int, m: float, amplitude: float | None = None) -> "RadialProblem":
        """Limit problem of the rescaled odometer n^{-2/d} u(n^{1/d} x).

        ``amplitude`` defaults to 2d; passing 1 gives the alternative
        normalisation of the point source.
        """
        A = 2.0 * d if amplitude is None else float(amplitude)
        return cls(d, 2.0 * d * m, A, 1.0 / m)

    @property
    def omega_eff(self) -> float:
        return self.A * omega(self.d)


@dataclass
class RadialSolution:
    problem: RadialProblem
    a1: float
    a2: float
    a3: float
    r1: float
    r2: float
    omega: float
    residuals: list[float] = field(default_factory=list)

    def __call__(self, r):
        return eval_radial(self, r)


def _binomial_tail(t, p: float, start: int = 2, terms: int = 40):
    """sum_{j >= start} C(p, j) t^j for |t| < 1."""
    t = np.asarray(t, dtype=np.float64)
    total = np.zeros_like(t)
    power = t**start
    for j in range(start, start + terms):
        total = total + binom(p, j) * power
        power = power * t
    return total


def _pow_minus_linear(t, p: float):
    """(1 + t)^p − 1 − p·t, without cancellation for small t."""
    t = np.asarray(t, dtype=np.float64)
    small = np.abs(t) < 0.1
    direct = np.expm1(p * np.log1p(np.where(small, 0.0, t))) - p * t
    series = _binomial_tail(np.where(small, t, 0.0), p)
    out = np.where(small, series, direct)
    return out if out.ndim else float(out)


def radial_residual(x, p: RadialProblem):
    """Scalar equation for the inner radius r₁ of the generic problem.

    Zero exactly at r₁.  Negative near 0 and positive near infinity for
    d ≥ 3; positive near 0 and negative near infinity for d = 2.
    """
    x = np.asarray(x, dtype=np.float64)
    d, lam, k, om = p.d, p.lam, p.k, p.omega_eff
    if d == 2:
        s = -2.0 * om / lam
        out = lam / 4.0 * (x * x + s) * np.log1p(s / (x * x)) + om / 2.0 - k
    else:
        t = om * d * (d - 2) / (lam * x**d)
        # the first-order term of (1 + t)^{2/d} cancels -omega x^{2-d} exactly
        out = k + lam / (2.0 * (d - 2)) * x * x * _pow_minus_linear(t, 2.0 / d)
    return out if out.ndim else float(out)


def radial_residual_prime(x: float, p: RadialProblem) -> float:
    d, lam, om = p.d, p.lam, p.omega_eff
    if d == 2:
        s = -2.0 * om / lam
        return lam / 2.0 * (x * math.log1p(s / (x * x)) - s / x)
    t = om * d * (d - 2) / (lam * x**d)
    return (d - 2) * om * x ** (1 - d) + lam / (d - 2) * x * math.expm1((2 - d) / d * math.log1p(t))


def f1(x, d: int, m: float, stable: bool = False):
    """Inner-radius equation of the scaled problem for d > 2.

    The literal form loses about log10(m) digits to cancellation; with
    ``stable`` the two large terms are combined analytically.
    """
    if d <= 2:
        raise InvalidConfig("f1 is defined for d > 2")
    x = np.asarray(x, dtype=np.float64)
    w = omega(d)
    c = d / (d - 2)
    if stable:
        t = w * d * (d - 2) / (m * x**d)
        out = 1.0 + m * m * c * x * x * _pow_minus_linear(t, 2.0 / d)
    else:
        out = (
            1.0
            - 2 * d * m * w / x ** (d - 2)
            - m * m * c * x * x
            + m * m * c * (x**d + w * d * (d - 2) / m) ** (2.0 / d)
        )
    return out if out.ndim else float(out)


def f2(x, m: float):
    """Inner-radius equation of the scaled problem in d = 2 (right minus left side)."""
    x = np.asarray(x, dtype=np.float64)
    a = 1.0 / (math.pi * m)
    out = (x * x + a) * np.log1p(a / (x * x)) - (1.0 / m**2 + a)
    return out if out.ndim else float(out)


def bisect_newton(
    f: Callable[[float], float],
    fprime: Callable[[float], float] | None,
    lo: float,
    hi: float,
    width: float = 1e-8,
    ftol: float = 1e-14,
    max_newton: int = 60,
) -> float:
    """Root of ``f`` in [lo, hi]: bisection down to ``width``, then Newton polish.

    Newton steps that leave the current bracket fall back to bisection.
    """
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)) or (f_lo > 0) == (f_hi > 0):
        raise BracketError("no sign change in bracket", lo=lo, hi=hi, f_lo=f_lo, f_hi=f_hi)
    sign_lo = f_lo > 0
    while hi - lo > width * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == sign_lo:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    if fprime is None:
        return x
    for _ in range(max_newton):
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx > 0) == sign_lo:
            lo = x
        else:
            hi = x
        dfx = fprime(x)
        step = fx / dfx if dfx != 0.0 else math.inf
        x_new = x - step
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4 * np.finfo(float).eps * abs(x) or abs(fx) <= ftol * 1e-6:
            return x_new
        x = x_new
    return x


def residuals(sol: RadialSolution) -> list[float]:
    """The five matching equations evaluated at ``sol`` (all zero when exact)."""
    p = sol.problem
    d, lam, k, om = p.d, p.lam, p.k, sol.omega
    a1, a2, a3, r1, r2 = sol.a1, sol.a2, sol.a3, sol.r1, sol.r2
    if d == 2:
        return [
            a2 + a3 * math.log(r2) + lam / 4 * r2**2,
            a3 * r2**-2 + lam / 2,
            a1 + om * math.log(r1) - k,
            a2 + a3 * math.log(r1) + lam / 4 * r1**2 - k,
            om * r1**-2 - a3 * r1**-2 - lam / 2,
        ]
    return [
        a2 + a3 * r2 ** (2 - d) + lam / (2 * d) * r2**2,
        a3 * (2 - d) * r2**-d + lam / d,
        a1 + om * r1 ** (2 - d) - k,
        a2 + a3 * r1 ** (2 - d) + lam / (2 * d) * r1**2 - k,
        om * (2 - d) * r1**-d - a3 * (2 - d) * r1**-d - lam / d,
    ]


def outer_radius(r1: float, p: RadialProblem) -> float:
    d, om = p.d, p.omega_eff
    if d == 2:
        return math.sqrt(r1 * r1 - 2.0 * om / p.lam)
    return (r1**d + om * d * (d - 2) / p.lam) ** (1.0 / d)


def solve_radial(p: RadialProblem, tol: float = 1e-10, bracket=DEFAULT_BRACKET) -> RadialSolution:
    d, lam, k, om = p.d, p.lam, p.k, p.omega_eff
    r1 = bisect_newton(lambda x: radial_residual(x, p), lambda x: radial_residual_prime(x, p), *bracket)
    r2 = outer_radius(r1, p)
    if d == 2:
        a3 = -lam / 2.0 * r2 * r2
    else:
        a3 = lam * r2**d / (d * (d - 2))
    a2 = -a3 * float(green(r2, d)) - lam / (2 * d) * r2 * r2
    a1 = k - om * float(green(r1, d))
    sol = RadialSolution(p, a1, a2, a3, r1, r2, om)
    sol.residuals = residuals(sol)
    worst = max(abs(r) for r in sol.residuals)
    # the equations add terms of size up to λr2², so rounding alone leaves
    # residuals of order eps·λr2²; tol is relative to that once it exceeds 1
    scale = max(1.0, abs(a1), abs(a2), abs(a3), lam * r2 * r2)
    if worst > tol * scale:
        raise BracketError(f"radial residual {worst:.3e} exceeds tol {tol:.1e} x scale {scale:.1e}", lo=bracket[0], hi=bracket[1],
                           f_lo=radial_residual(bracket[0], p), f_hi=radial_residual(bracket[1], p))
    return sol


def eval_radial(sol: RadialSolution, r):
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0):
        raise ValueError("radial solution is singular at the origin; r must be positive")
    p = sol.problem
    inner = sol.a1 + sol.omega * green(r, p.d)
    annulus = sol.a2 + sol.a3 * green(r, p.d) + p.lam / (2 * p.d) * r * r
    out = np.where(r <= sol.r1, inner, np.where(r <= sol.r2, annulus, 0.0))
    return out if out.ndim else float(out)


def annulus_volume(sol: RadialSolution) -> float:
    return unit_ball_volume(sol.problem.d) * (sol.r2**sol.problem.d - sol.r1**sol.problem.d)


def inner_radius_xm(d: int, m: float, tol: float = 1e-12, bracket=DEFAULT_BRACKET) -> float:
    """Inner radius x_m of the scaled problem, as the root of f1 (d > 2) or f2 (d = 2)."""
    if not m > 0:
        raise InvalidConfig(f"threshold must be positive, got {m}")
    if d < 2:
        raise InvalidConfig(f"dimension must be at least 2, got {d}")
    if d == 2:
        a = 1.0 / (math.pi * m)

        def g(x):
            return f2(x, m)

        def gp(x):
            return 2 * x * math.log1p(a / (x * x)) - 2 * a / x
    else:
        stable = m > 1e3
        w = omega(d)

        def g(x):
            return f1(x, d, m, stable=stable)

        def gp(x):
            t = w * d * (d - 2) / (m * x**d)
            return m * (2 * d * (d - 2) * w * x ** (1 - d)
                        + 2 * m * d / (d - 2) * x * math.expm1((2 - d) / d * math.log1p(t)))
    return float(bisect_newton(g, gp, *bracket, width=min(1e-8, tol)))


LIMIT_M = 1e12


def limit_radius(d: int) -> float:
    """m → ∞ limit of the inner radius x_m."""
    if d < 2:
        raise InvalidConfig(f"dimension must be at least 2, got {d}")
    if d == 2:
        return 1.0 / (math.sqrt(2.0) * math.pi)
    return inner_radius_xm(d, LIMIT_M)


def _sphere_rule(d: int, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Points on the unit sphere S^{d-1} and weights summing to 1."""
    if d == 2:
        theta = 2 * math.pi * np.arange(4 * order) / (4 * order)
        pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return pts, np.full(len(pts), 1.0 / len(pts))
    if d == 3:
        z, wz = np.polynomial.legendre.leggauss(order)
        phi = 2 * math.pi * np.arange(2 * order) / (2 * order)
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - zz**2)
        pts = np.stack([s * np.cos(pp), s * np.sin(pp), zz], axis=-1).reshape(-1, 3)
        w = (np.repeat(wz, len(phi)) / 2.0) / len(phi)
        return pts, w
    # Higher d: Gaussian directions closed under sign flips and coordinate
    # permutations (exact for the low-degree symmetric test polynomials).
    rng = np.random.default_rng(0)
    base = rng.standard_normal((64, d))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    pts = [base]
    for axis in range(d):
        flipped = [p.copy() for p in pts]
        for p in flipped:
            p[:, axis] *= -1
        pts += flipped
    pts = np.concatenate(pts)
    perms = [np.roll(np.arange(d), s) for s in range(d)]
    pts = np.concatenate([pts[:, p] for p in perms] + [pts[:, p][:, ::-1] for p in perms])
    return pts, np.full(len(pts), 1.0 / len(pts))


def sphere_average(h: Callable[[np.ndarray], np.ndarray], d: int, radius: float) -> float:
    pts, w = _sphere_rule(d)
    return float(np.sum(w * h(radius * pts)))


def quadrature_identity_check(sol_m_sequence: Sequence[RadialSolution], h: Callable[[np.ndarray], np.ndarray]) -> float:
    """Discrepancy in the quadrature identity ∫h dμ = ∫ h dσ for harmonic ``h``.

    The source is a unit point mass at the origin.  The limit measure is the
    uniform probability on the sphere of radius ``limit_radius(d)``; each
    solution in ``sol_m_sequence`` contributes its annulus measure λ·dx/A,
    which has the same total mass.  Returns the largest |∫h dμ − ∫h dν| over
    the limit sphere and all annuli; zero for harmonic h up to quadrature error.
    """
    if not sol_m_sequence:
        raise InvalidConfig("need at least one radial solution")
    d = sol_m_sequence[0].problem.d
    origin = np.zeros((1, d))
    h0 = float(np.asarray(h(origin)).ravel()[0])
    worst = abs(h0 - sphere_average(h, d, limit_radius(d)))
    nodes, weights = np.polynomial.legendre.leggauss(24)
    for sol in sol_m_sequence:
        p = sol.problem
        r = 0.5 * (sol.r2 - sol.r1) * nodes + 0.5 * (sol.r2 + sol.r1)
        wr = 0.5 * (sol.r2 - sol.r1) * weights
        area = d * unit_ball_volume(d)
        shell = sum(wi * area * ri ** (d - 1) * sphere_average(h, d, ri) for ri, wi in zip(r, wr))
        worst = max(worst, abs(h0 - p.lam * shell / p.A))
    return worst
