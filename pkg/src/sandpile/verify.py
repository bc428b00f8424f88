"""Executable checks of the qualitative properties of a stabilized state.

Everything here reads a :class:`~sandpile.engine.SandpileState` without
mutating it.  Geometry is measured around the origin, which is where the
single-source results live; the checks that only make sense for one source
at the origin raise :class:`~sandpile.errors.NotApplicable` otherwise.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import engine, lattice
from .analytic import RadialProblem, RadialSolution, eval_radial, solve_radial
from .engine import SandpileState
from .errors import CheckFailure, NotApplicable
from .lattice import LatticeField

REPORT_SCHEMA = 1


def _require_single_source(s: SandpileState, what: str) -> None:
    if not s.is_single_source_at_origin():
        raise NotApplicable(f"{what} is defined for a single source at the origin only")


def reflections(values: np.ndarray) -> list[np.ndarray]:
    """Images of a centred array under the d² mirror symmetries of Z^d.

    The mirrors are the coordinate hyperplanes x_i = 0 and the diagonal
    hyperplanes x_i = ±x_j.
    """
    d = values.ndim
    out = [np.flip(values, axis=i) for i in range(d)]
    for i, j in itertools.combinations(range(d), 2):
        swapped = np.swapaxes(values, i, j)
        out.append(swapped)
        out.append(np.flip(swapped, axis=(i, j)))
    return out


def check_symmetry(s: SandpileState) -> float:
    """Largest |u(x) − u(x*)| over all sites and all mirror images x*."""
    _require_single_source(s, "the symmetry check")
    u = s.u.values
    return max((float(np.max(np.abs(u - r))) for r in reflections(u)), default=0.0)


def normal_directions(d: int) -> list[tuple[int, ...]]:
    """Normals of the mirror hyperplanes, both orientations: ±e_i and ±e_i ± e_j."""
    out = []
    for i in range(d):
        for sign in (1, -1):
            v = [0] * d
            v[i] = sign
            out.append(tuple(v))
    for i, j in itertools.combinations(range(d), 2):
        for si, sj in itertools.product((1, -1), repeat=2):
            v = [0] * d
            v[i], v[j] = si, sj
            out.append(tuple(v))
    return out


def _shifted(padded: np.ndarray, v: Sequence[int]) -> np.ndarray:
    """View of f(x + v) for a 1-padded array, aligned with the unpadded one."""
    return padded[tuple(slice(1 + c, padded.shape[a] - 1 + c) for a, c in enumerate(v))]


def monotonicity_violations(u: LatticeField, tol: float) -> int:
    """Ordered pairs (x, x+v), v a mirror normal, with |x+v| ≥ |x| but u(x+v) > u(x) + tol."""
    padded = np.pad(u.values, 1)
    norm2 = u.norm2_squared()
    norm2_padded = np.pad(np.broadcast_to(norm2, u.values.shape), 1, constant_values=np.inf)
    count = 0
    for v in normal_directions(u.dim):
        further = _shifted(norm2_padded, v) >= norm2
        count += int(np.count_nonzero(further & (_shifted(padded, v) > u.values + tol)))
    return count


def check_monotonicity(s: SandpileState, tol: float | None = None) -> int:
    _require_single_source(s, "the monotonicity check")
    if tol is None:
        tol = 1e-9 * float(s.u.values.max(initial=0.0))
    return monotonicity_violations(s.u, tol)


def ray_directions(d: int) -> list[tuple[int, ...]]:
    """The 2d axis directions followed by the 2^d diagonals (±1, ..., ±1)."""
    axes = normal_directions(d)[: 2 * d]
    return axes + list(itertools.product((1, -1), repeat=d))


def _ray(mask: np.ndarray, radius: int, v: Sequence[int]) -> np.ndarray:
    steps = np.arange(radius + 1)
    idx = tuple(radius + c * steps for c in v)
    return mask[idx]


@dataclass
class ShapeReport:
    n: float
    m: float
    d: int
    inradius_V0: float
    outradius_V0: float
    annulus_min: float
    annulus_max: float
    boundary_count: int
    boundary_bound: float
    symmetry_max_err: float | None
    monotonicity_violations: int | None
    lipschitz_max: float
    c11_max: float
    r0: float
    ray_radius_V: dict[str, float] = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return self.n ** (1.0 / self.d)

    @property
    def roundness(self) -> float:
        """(max − min)/max of the ray radii of V; 0 for a perfect ball."""
        radii = list(self.ray_radius_V.values())
        if not radii or max(radii) == 0:
            return 0.0
        return (max(radii) - min(radii)) / max(radii)

    @property
    def lipschitz_scaled(self) -> float:
        return self.lipschitz_max / self.scale

    @property
    def c11_scaled(self) -> float:
        return self.c11_max / self.m

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(roundness=self.roundness, lipschitz_scaled=self.lipschitz_scaled,
                   c11_scaled=self.c11_scaled)
        return out


def measure_regions(s: SandpileState, r0_frac: float = 0.05) -> ShapeReport:
    """Radii, annulus thickness and regularity of a single-source state."""
    reg = engine.regions(s)
    R, d = s.radius, s.dim
    norm = np.sqrt(np.broadcast_to(s.u.norm2_squared(), reg.V.shape))
    inradius = outradius = 0.0
    if reg.V0.any():
        # inradius: farthest core site with every closer site also in the core
        gap = norm[~reg.V0].min()
        inside = norm[reg.V0]
        inradius = float(inside[inside < gap].max(initial=0.0))
        outradius = float(inside.max())

    thickness, ray_radius = [], {}
    for v in ray_directions(d):
        step = math.sqrt(sum(c * c for c in v))
        thickness.append(np.count_nonzero(_ray(reg.V1, R, v)) * step)
        hits = np.nonzero(_ray(reg.V, R, v))[0]
        ray_radius[",".join(map(str, v))] = float(hits.max() * step) if hits.size else 0.0

    r0 = r0_frac * s.n ** (1.0 / d)
    outside = norm >= r0
    padded = np.pad(s.u.values, 1)
    lip = c11 = 0.0
    for axis in range(d):
        e = [0] * d
        e[axis] = 1
        fwd, bwd = _shifted(padded, e), _shifted(padded, [-c for c in e])
        grad = np.abs(fwd - s.u.values)[outside]
        second = np.abs(fwd - 2 * s.u.values + bwd)[outside]
        lip = max(lip, float(grad.max(initial=0.0)))
        c11 = max(c11, float(second.max(initial=0.0)))

    count, bound = engine.boundary_count_bound(s)
    single = s.is_single_source_at_origin()
    return ShapeReport(
        n=s.n, m=s.m, d=d,
        inradius_V0=inradius, outradius_V0=outradius,
        annulus_min=float(min(thickness)), annulus_max=float(max(thickness)),
        boundary_count=count, boundary_bound=bound,
        symmetry_max_err=check_symmetry(s) if single else None,
        monotonicity_violations=check_monotonicity(s) if single else None,
        lipschitz_max=lip, c11_max=c11, r0=r0, ray_radius_V=ray_radius,
    )


def _align(w: LatticeField, radius: int) -> np.ndarray:
    """Values of ``w`` on the box of ``radius`` (which must not be smaller)."""
    return w.values if w.radius == radius else lattice.grow(w, radius).values


def supersolution_violation(w: LatticeField, s: SandpileState) -> float:
    """Largest violation of the two super-solution inequalities (≤ 0 means accepted).

    (i)  Δw + μ₀ ≤ m everywhere;
    (ii) Δw + μ₀ ≤ m·1{0 < w ≤ κ} on {w > 0}, i.e. ≤ 0 wherever w > κ.
    """
    radius = max(w.radius, s.radius) + 1
    wv = _align(w, radius)
    mu0 = lattice.grow(s.mu0, radius).values
    if np.any(wv < 0):
        return float(-wv.min())
    lhs = lattice.laplacian_array(wv) + mu0
    cap = np.where(wv > s.kappa, 0.0, s.m)
    return float(np.max(lhs - cap))


def supersolution_tolerance(s: SandpileState) -> float:
    """Slack for the inequalities: an ε-stable odometer leaves up to 2d·ε of mass behind."""
    eps = s.eps_stop if s.eps_stop is not None else 0.0
    return max(1e-9 * max(s.m, 1.0), 2 * s.dim * eps)


def minimality_gap(w: LatticeField, s: SandpileState) -> float:
    """max_x (u(x) − w(x)); non-positive when w dominates the odometer."""
    radius = max(w.radius, s.radius)
    wv = _align(w, radius)
    uv = s.u.values if s.radius == radius else lattice.grow(s.u, radius).values
    return float(np.max(uv - wv))


def check_supersolution(w: LatticeField, s: SandpileState, tol: float | None = None) -> bool:
    """Whether ``w`` is a super-solution; if it is, the odometer must lie below it.

    Raises :class:`CheckFailure` when an accepted ``w`` is undercut by u by
    more than 1e-9·max u, which would contradict minimality of the odometer.
    """
    tol = supersolution_tolerance(s) if tol is None else tol
    if supersolution_violation(w, s) > tol:
        return False
    gap = minimality_gap(w, s)
    if gap > 1e-9 * float(s.u.values.max(initial=0.0)):
        raise CheckFailure(f"accepted super-solution lies below the odometer by {gap:.3e}")
    return True


def max_principle_holds(f: np.ndarray, region: np.ndarray, tol: float = 0.0) -> bool:
    """Where Δf ≥ 0 on the interior of ``region``, the max over it sits on its boundary.

    The interior is the set of sites of ``region`` whose neighbours all lie
    in ``region``; if Δf < -tol somewhere inside, the premise fails and the
    predicate holds vacuously.
    """
    region = region.astype(bool)
    if not region.any():
        return True
    interior = region & ~lattice.dilate(~region)
    if np.any(lattice.laplacian_array(f)[interior] < -tol):
        return True
    rim = region & ~interior
    top_rim = float(f[rim].max()) if rim.any() else -math.inf
    return float(f[region].max()) <= top_rim + tol


def boundary_is_graph(mask: np.ndarray) -> bool:
    """Whether, inside each cone {σx_a ≥ |x_i| for i ≠ a}, every line parallel
    to e_a leaves ``mask`` once and never re-enters it.

    ``mask`` is a centred boolean array; this is the discrete form of the
    boundary being a graph over the hyperplane orthogonal to e_a.
    """
    d = mask.ndim
    R = (mask.shape[0] - 1) // 2
    coords = np.arange(-R, R + 1)
    for axis in range(d):
        for sign in (1, -1):
            arr = np.moveaxis(mask, axis, -1)
            if sign < 0:
                arr = np.flip(arr, axis=-1)
            grids = np.meshgrid(*([coords] * d), indexing="ij", sparse=True)
            others = [np.abs(g) for g in grids[:-1]]
            floor = others[0]
            for o in others[1:]:
                floor = np.maximum(floor, o)
            cone = grids[-1] >= floor
            both = cone[..., :-1] & cone[..., 1:]
            if np.any(both & ~arr[..., :-1] & arr[..., 1:]):
                return False
    return True


def check_boundary_graph(s: SandpileState) -> bool:
    _require_single_source(s, "the boundary-graph check")
    return boundary_is_graph(s.visited.values)


# --- scaling limit --------------------------------------------------------

Solver = Callable[[int, float, float], SandpileState]


def stabilized_single_source(d: int, n: float, m: float, **kwargs) -> SandpileState:
    s = engine.new_state(d, [((0,) * d, n)], m)
    engine.stabilize(s, **kwargs)
    return s


def rescaled_odometer(s: SandpileState) -> tuple[np.ndarray, np.ndarray]:
    """(|x|·h, h²·u(x)) at every site of the box, h = n^{-1/d}."""
    h = s.n ** (-1.0 / s.dim)
    r = np.sqrt(np.broadcast_to(s.u.norm2_squared(), s.u.values.shape)) * h
    return r, s.u.values * h * h


def scaling_error(s: SandpileState, sol: RadialSolution, rho: float) -> float:
    """sup over |x| ≥ rho of |u_h − u₀| for the rescaled odometer u_h."""
    r, uh = rescaled_odometer(s)
    keep = r >= rho
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(uh[keep] - eval_radial(sol, r[keep]))))


def rescaled_radii(s: SandpileState) -> tuple[float, float]:
    """Outer radius of V and of V0 divided by n^{1/d}."""
    reg = engine.regions(s)
    r, _ = rescaled_odometer(s)
    support = float(r[reg.V].max()) if reg.V.any() else 0.0
    core = float(r[reg.V0].max()) if reg.V0.any() else 0.0
    return support, core


@dataclass
class ScalingReport:
    m: float
    rho: float
    d: int = 2
    amplitude: float = 4.0
    r1: float = math.nan
    r2: float = math.nan
    n_values: list[float] = field(default_factory=list)
    sup_err: list[float] = field(default_factory=list)
    support_radius: list[float] = field(default_factory=list)
    core_radius: list[float] = field(default_factory=list)

    def non_increasing(self, slack: float = 0.1) -> bool:
        return all(b <= a * (1 + slack) for a, b in zip(self.sup_err, self.sup_err[1:]))


def scaling_convergence(m: float, n_list: Sequence[float], rho: float, d: int = 2, *,
                        amplitude: float | None = None, solver: Solver | None = None) -> ScalingReport:
    """Compare rescaled odometers at each n with the radial limit profile."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    solver = solver or stabilized_single_source
    sol = solve_radial(RadialProblem.scaled(d, m, amplitude))
    report = ScalingReport(m=m, rho=rho, d=d, amplitude=sol.problem.A, r1=sol.r1, r2=sol.r2)
    for n in n_list:
        s = solver(d, n, m)
        support, core = rescaled_radii(s)
        report.n_values.append(n)
        report.sup_err.append(scaling_error(s, sol, rho))
        report.support_radius.append(support)
        report.core_radius.append(core)
    return report


@dataclass
class Calibration:
    m_values: list[float]
    n_raw: list[float | None]
    n_values: list[float | None]
    sup_err: list[float | None]
    truncated: bool = False

    def pairs(self) -> list[tuple[float, float]]:
        return [(m, n) for m, n in zip(self.m_values, self.n_values) if n is not None]

    def F(self, n: float) -> float | None:
        """Largest calibrated m whose n(m) ≤ n; None below the first calibrated n."""
        ok = [m for m, nm in self.pairs() if nm <= n]
        return max(ok) if ok else None


def calibrate_F(m_list: Sequence[float],
                rho_of_m: Callable[[float], float] = lambda m: 1.0 / m,
                tol_of_m: Callable[[float], float] = lambda m: 1.0 / m,
                d: int = 2, *, n_start: float = 16.0, n_max: float = 2.0**22,
                time_budget: float = 600.0, solver: Solver | None = None) -> Calibration:
    """For each m the smallest n = n_start·2^k with sup_{|x|≥ρ(m)} |u_h − u_{0,m}| ≤ tol(m).

    The raw values are made non-decreasing by a running maximum.  When n
    would exceed ``n_max`` or the wall clock passes ``time_budget`` the search
    stops and the remaining entries are left as None with ``truncated`` set.
    """
    if any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("m_list must be increasing")
    solver = solver or stabilized_single_source
    t0 = time.perf_counter()
    raw: list[float | None] = []
    errs: list[float | None] = []
    truncated = False
    for m in m_list:
        found = err = None
        if not truncated:
            sol = solve_radial(RadialProblem.scaled(d, m))
            n = n_start
            while n <= n_max:
                if time.perf_counter() - t0 > time_budget:
                    truncated = True
                    break
                err = scaling_error(solver(d, n, m), sol, rho_of_m(m))
                if err <= tol_of_m(m):
                    found = n
                    break
                n *= 2
            else:
                truncated = True
        raw.append(found)
        errs.append(err if found is not None else None)
    monotone, running = [], 0.0
    for n in raw:
        if n is None:
            monotone.append(None)
        else:
            running = max(running, n)
            monotone.append(running)
    return Calibration(list(m_list), raw, monotone, errs, truncated)


# --- report ---------------------------------------------------------------

def _check(name: str, passed: bool, value, limit=None) -> dict:
    return {"name": name, "passed": bool(passed), "value": value, "limit": limit}


def verify_state(s: SandpileState, r0_frac: float = 0.05) -> dict:
    """Every applicable check on ``s``, as a JSON-ready report."""
    checks = []
    mass_err = abs(engine.total_mass(s) - s.n)
    checks.append(_check("mass_conservation", mass_err <= 1e-9 * s.n, mass_err, 1e-9 * s.n))
    defect = engine.laplacian_defect(s)
    lim = 1e-9 * max(s.m, 1.0)
    checks.append(_check("laplacian_identity", defect <= lim, defect, lim))

    eps = s.eps_stop if s.eps_stop is not None else 1e-12 * s.n
    mu, reg = s.mu.values, engine.regions(s)
    over = float(mu.max(initial=0.0) - s.m)
    checks.append(_check("stable_threshold", over <= eps, over, eps))
    core_mass = float(mu[reg.V0].max(initial=0.0))
    checks.append(_check("mass_free_core", core_mass <= 2 * s.dim * eps, core_mass, 2 * s.dim * eps))

    count, bound = engine.boundary_count_bound(s)
    checks.append(_check("boundary_count", count <= bound, count, bound))
    try:
        accepted = check_supersolution(s.u, s)
        checks.append(_check("odometer_is_supersolution", accepted, accepted, True))
    except CheckFailure as exc:
        checks.append(_check("odometer_is_supersolution", False, str(exc), True))

    shape = None
    umax = float(s.u.values.max(initial=0.0))
    if s.is_single_source_at_origin():
        sym = check_symmetry(s)
        checks.append(_check("symmetry", sym <= 1e-9 * umax, sym, 1e-9 * umax))
        mono = check_monotonicity(s)
        checks.append(_check("monotonicity", mono == 0, mono, 0))
        graph = check_boundary_graph(s)
        checks.append(_check("boundary_graph", graph, graph, True))
        shape = measure_regions(s, r0_frac).to_dict()
    return {
        "schema": REPORT_SCHEMA,
        "d": s.dim, "n": s.n, "m": s.m, "kappa": s.kappa,
        "eps_stop": s.eps_stop, "residual_excess": s.residual_excess,
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "shape": shape,
    }


def report_passed(report: Mapping) -> bool:
    return bool(report.get("passed"))
