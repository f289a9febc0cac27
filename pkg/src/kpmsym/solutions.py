"""Closed-form KPI solutions, boundary samplers and the convention oracle."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from numpy.polynomial import Polynomial

from .core import EquationParams, GridSpec, lift_values

KINDS = ("line_soliton", "two_soliton", "lump", "manufactured", "zero")


@dataclass(frozen=True)
class LineSolitonParams:
    """``u = A k^2 sech^2(k (x + lam*y - v*t - x_offset))`` with ``A = 6/c``."""

    k: float = 1.0
    lam: float = -np.sqrt(2) / 2
    x_offset: float = 6.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")

    def velocity(self, eq: EquationParams = EquationParams()) -> float:
        return (4 * self.k ** 2 + eq.sigma * self.lam ** 2) / eq.time_factor

    def amplitude(self, eq: EquationParams = EquationParams()) -> float:
        return 6.0 / eq.nonlin_coeff * self.k ** 2


DEFAULT_LINE_SOLITON = LineSolitonParams()
DEFAULT_TWO_SOLITON = (
    LineSolitonParams(k=1.0, lam=-1 / np.sqrt(3), x_offset=6.0),
    LineSolitonParams(k=1 / np.sqrt(2), lam=-1.0, x_offset=11.0),
)


@dataclass(frozen=True)
class LumpParams:
    mu_sq: float = 1.0
    x0: float = 10.0
    y0: float = 10.0

    def __post_init__(self):
        if not self.mu_sq > 0:
            raise ValueError("mu_sq must be positive")

    def velocity(self, eq: EquationParams = EquationParams()) -> float:
        return 3 * self.mu_sq / eq.time_factor

    def amplitude(self, eq: EquationParams = EquationParams()) -> float:
        return 6.0 / eq.nonlin_coeff * 2 * self.mu_sq


DEFAULT_LUMP = LumpParams()


def _log_cosh(s):
    a = np.abs(s)
    return a + np.log1p(np.exp(-2 * a)) - np.log(2.0)


# derivatives of log(cosh(s)) as polynomials in tanh(s):
# G'(s) = T, and d/ds P(T) = P'(T) (1 - T^2)
_TANH_POLYS = [Polynomial([0.0, 1.0])]
for _ in range(5):
    _TANH_POLYS.append(_TANH_POLYS[-1].deriv() * Polynomial([1.0, 0.0, -1.0]))


def _logcosh_deriv(s, n):
    if n == 0:
        return _log_cosh(s)
    return _TANH_POLYS[n - 1](np.tanh(s))


def _line_potential(x, y, t, sp: LineSolitonParams, eq: EquationParams):
    """Potential derivatives of one line soliton, exact."""
    B = 6.0 / eq.nonlin_coeff
    k, lam, v = sp.k, sp.lam, sp.velocity(eq)
    s = k * (x + lam * y - v * t - sp.x_offset)

    def d(nx, ny=0, nt=0):
        n = nx + ny + nt
        return B * k ** n * lam ** ny * (-v) ** nt * _logcosh_deriv(s, n)

    return {"phi": d(0), "x": d(1), "xx": d(2), "xxx": d(3), "xxxx": d(4),
            "xxxxx": d(5), "xy": d(1, 1), "xyy": d(1, 2), "xt": d(1, 0, 1),
            "xxt": d(2, 0, 1)}


def line_soliton_u(x, y, t, sp: LineSolitonParams = DEFAULT_LINE_SOLITON,
                   eq: EquationParams = EquationParams()):
    s = sp.k * (x + sp.lam * y - sp.velocity(eq) * t - sp.x_offset)
    return sp.amplitude(eq) / np.cosh(s) ** 2


def two_soliton_initial_u(x, y, solitons=DEFAULT_TWO_SOLITON,
                          eq: EquationParams = EquationParams()):
    """Superposed line solitons at t=0; not an exact two-soliton solution."""
    return sum(line_soliton_u(x, y, 0.0, sp, eq) for sp in solitons)


def two_soliton_velocities(solitons=DEFAULT_TWO_SOLITON, eq: EquationParams = EquationParams()):
    return [sp.velocity(eq) for sp in solitons]


def interaction_coefficient(solitons=DEFAULT_TWO_SOLITON, eq: EquationParams = EquationParams()):
    """Hirota phase factor ``A12`` of a line-soliton pair (regular iff positive)."""
    def P(p, q, w):
        return -eq.time_factor * p * w + p ** 4 + eq.sigma * q ** 2
    (p1, q1, w1), (p2, q2, w2) = [_wave_numbers(sp, eq) for sp in solitons]
    return -P(p1 - p2, q1 - q2, w1 - w2) / P(p1 + p2, q1 + q2, w1 + w2)


def _wave_numbers(sp: LineSolitonParams, eq):
    p = 2 * sp.k
    return p, p * sp.lam, p * sp.velocity(eq)


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for n in range(len(part)):
            yield part[:n] + [[first] + part[n]] + part[n + 1:]


def _joint_cumulant(weights, variables):
    """Joint cumulant of per-term values under per-point term weights.

    This is the mixed derivative of ``log sum_m exp(theta_m)`` when each
    ``theta_m`` is linear in the coordinates.
    """
    total = 0.0
    for part in _set_partitions(list(range(len(variables)))):
        n = len(part)
        term = (-1) ** (n - 1) * factorial(n - 1)
        for block in part:
            vals = np.prod([variables[i] for i in block], axis=0)
            term = term * np.tensordot(vals, weights, axes=(0, 0))
        total = total + term
    return total


def _two_soliton_potential(x, y, t, solitons, eq: EquationParams, keys=None):
    """Derivatives of ``phi = (6/c) log tau`` for the exact two-soliton.

    ``tau = 1 + e^eta1 + e^eta2 + A12 e^(eta1+eta2)``; the phase of the
    soliton lying ahead at t=0 is shifted by ``-log A12`` so that both crests
    sit at their ``x_offset`` before the collision, matching the superposed
    initial data up to exponentially small overlap.
    """
    A = interaction_coefficient(solitons, eq)
    if not A > 0:
        raise ValueError("the two-soliton with these parameters is singular (A12 <= 0)")
    waves = [_wave_numbers(sp, eq) for sp in solitons]
    phases = [-p * sp.x_offset for (p, _, _), sp in zip(waves, solitons)]
    ahead = int(np.argmax([sp.x_offset for sp in solitons]))
    phases[ahead] -= np.log(A)
    (p1, q1, w1), (p2, q2, w2) = waves
    terms = [(0.0, 0.0, 0.0, 0.0), (p1, q1, w1, phases[0]), (p2, q2, w2, phases[1]),
             (p1 + p2, q1 + q2, w1 + w2, phases[0] + phases[1] + np.log(A))]
    P = np.array([T[0] for T in terms])
    Q = np.array([T[1] for T in terms])
    R = -np.array([T[2] for T in terms])
    theta = np.stack([P_ * x + Q_ * y + R_ * t + C for P_, Q_, R_, C in
                      zip(P, Q, R, [T[3] for T in terms])])
    top = theta.max(axis=0)
    ex = np.exp(theta - top)
    log_tau = top + np.log(ex.sum(axis=0))
    w = ex / ex.sum(axis=0)
    B = 6.0 / eq.nonlin_coeff
    var = {"x": P, "y": Q, "t": R}
    d = {"phi": B * log_tau}
    for key in keys or ("x", "xx", "xxx", "xxxx", "xxxxx", "xy", "xyy", "xt", "xxt"):
        d[key] = B * _joint_cumulant(w, [var[c] for c in key])
    return d


def two_soliton_u(x, y, t, solitons=DEFAULT_TWO_SOLITON, eq: EquationParams = EquationParams()):
    """Exact (Hirota) two-soliton, phase-matched to the superposed data at t=0."""
    x, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, t)))
    return _two_soliton_potential(x, y, t, solitons, eq, keys=("xx",))["xx"]


def lump_u(x, y, t, lp: LumpParams = DEFAULT_LUMP, eq: EquationParams = EquationParams(),
           power: int = 2):
    """KPI lump; ``power=1`` gives the unsquared denominator (not a solution)."""
    m = lp.mu_sq
    X = x - lp.x0 - lp.velocity(eq) * t
    Y = y - lp.y0
    num = -X ** 2 + m * Y ** 2 + 1 / m
    den = X ** 2 + m * Y ** 2 + 1 / m
    return 6.0 / eq.nonlin_coeff * 2 * num / den ** power


def _lump_potential(x, y, t, lp: LumpParams, eq: EquationParams):
    """Derivatives of ``phi = B log(X^2 + mu^2 Y^2 + 1/mu^2)``, exact."""
    if eq.sigma != -3:
        raise ValueError("the lump family is only available for sigma=-3")
    B = 6.0 / eq.nonlin_coeff
    m = lp.mu_sq
    vel = lp.velocity(eq)
    X = x - lp.x0 - vel * t
    Y = y - lp.y0
    F = X ** 2 + m * Y ** 2 + 1 / m
    z = X + 1j * np.sqrt(m * Y ** 2 + 1 / m)

    def dx(n):
        # d^n/dX^n log(F) = 2 (-1)^(n-1) (n-1)! Re(z^-n)
        return B * 2 * (-1) ** (n - 1) * factorial(n - 1) * np.real(z ** (-n))

    d = {"phi": B * np.log(F)}
    for n, key in enumerate(("x", "xx", "xxx", "xxxx", "xxxxx"), start=1):
        d[key] = dx(n)
    d["xy"] = -4 * B * m * X * Y / F ** 2
    d["xyy"] = -4 * B * m * X / F ** 2 + 16 * B * m ** 2 * X * Y ** 2 / F ** 3
    d["xt"] = -vel * d["xx"]
    d["xxt"] = -vel * d["xxx"]
    return d


def _manufactured_potential(x, y, t):
    """``phi = sin(x) cos(y) exp(-t)``; smooth but not a KP solution."""
    e = np.exp(-t)
    sx = lambda n: np.sin(x + n * np.pi / 2)
    cy, sy = np.cos(y), np.sin(y)
    return {"phi": sx(0) * cy * e, "x": sx(1) * cy * e, "xx": sx(2) * cy * e,
            "xxx": sx(3) * cy * e, "xxxx": sx(4) * cy * e, "xxxxx": sx(5) * cy * e,
            "xy": -sx(1) * sy * e, "xyy": -sx(1) * cy * e, "xt": -sx(1) * cy * e,
            "xxt": -sx(2) * cy * e}


@dataclass(frozen=True)
class Scenario:
    """A solution family plus the domain it is run on.

    ``domain`` is ``(x0, x1, y0, y1, t_end)``.  The two-soliton scenario
    starts from superposed line solitons (:meth:`initial_u`); for t > 0 its
    samplers return the phase-matched exact two-soliton
    (``two_soliton_boundary="exact"``) or keep superposing the translated
    single solitons (``"superposed"``).  The superposed form ignores the
    collision phase shift, so its boundary rows disagree with the interior
    after the collision.
    """

    kind: str = "line_soliton"
    params: object = None
    domain: tuple = (0.0, 40.0, 0.0, 2.0, 10.0)
    eq: EquationParams = field(default_factory=EquationParams)
    two_soliton_boundary: str = "exact"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.params is None:
            default = {"line_soliton": DEFAULT_LINE_SOLITON, "two_soliton": DEFAULT_TWO_SOLITON,
                       "lump": DEFAULT_LUMP}.get(self.kind)
            object.__setattr__(self, "params", default)
        if self.two_soliton_boundary not in ("exact", "superposed"):
            raise ValueError("two_soliton_boundary must be 'exact' or 'superposed'")
        x0, x1, y0, y1, t_end = self.domain
        if not (x1 > x0 and y1 > y0 and t_end > 0):
            raise ValueError("domain must be a nondegenerate rectangle with t_end > 0")

    @property
    def has_exact_solution(self):
        return self.kind in ("line_soliton", "lump", "zero")

    def potential(self, x, y, t):
        x, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, t)))
        if self.kind == "line_soliton":
            return _line_potential(x, y, t, self.params, self.eq)
        if self.kind == "two_soliton":
            if self.two_soliton_boundary == "exact":
                return _two_soliton_potential(x, y, t, self.params, self.eq)
            return self._superposed(x, y, t)
        if self.kind == "lump":
            return _lump_potential(x, y, t, self.params, self.eq)
        if self.kind == "manufactured":
            return _manufactured_potential(x, y, t)
        zero = np.zeros_like(x)
        return {k: zero for k in ("phi", "x", "xx", "xxx", "xxxx", "xxxxx",
                                  "xy", "xyy", "xt", "xxt")}

    def _superposed(self, x, y, t):
        parts = [_line_potential(x, y, t, sp, self.eq) for sp in self.params]
        return {k: sum(p[k] for p in parts) for k in parts[0]}

    def u(self, x, y, t):
        if self.kind == "two_soliton" and self.two_soliton_boundary == "exact":
            return two_soliton_u(x, y, t, self.params, self.eq)
        return self.potential(x, y, t)["xx"]

    def initial_potential(self, x, y, t0=0.0):
        """Potential derivatives of the initial data at ``t0``."""
        if self.kind == "two_soliton":
            x, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, t0)))
            return self._superposed(x, y, t)
        return self.potential(x, y, t0)

    def initial_u(self, x, y, t0=0.0):
        return self.initial_potential(x, y, t0)["xx"]

    def initial_z(self, x, y, t0=0.0):
        return lift_values(self.initial_potential(x, y, t0), self.eq)

    def z(self, x, y, t):
        """Lifted ten-component state."""
        return lift_values(self.potential(x, y, t), self.eq)

    def grid(self, dx, dy, dt, t_end=None):
        x0, x1, y0, y1, te = self.domain
        return GridSpec.from_domain((x0, x1), (y0, y1), te if t_end is None else t_end,
                                    dx, dy, dt)


def boundary_mask(grid: GridSpec, bx: int = 1, by: int = 1) -> np.ndarray:
    """``(ny, nx)`` mask of the nodes within ``bx`` columns / ``by`` rows of the edge."""
    m = np.zeros((grid.ny, grid.nx), bool)
    m[:, :bx] = m[:, grid.nx - bx:] = True
    m[:by, :] = m[grid.ny - by:, :] = True
    return m


def boundary_sampler(scenario: Scenario, grid: GridSpec, k: int, band=(1, 1),
                     full_z: bool = False):
    """Exact values on the boundary band of time level ``k``.

    Returns a ``(ny, nx)`` u-plane (``(10, ny, nx)`` state plane when
    ``full_z``) with the band filled and NaN elsewhere.
    """
    if scenario.kind == "manufactured":
        raise ValueError("the manufactured scenario has no boundary data")
    X, Y, T = grid.mesh(k)
    mask = boundary_mask(grid, *band)
    vals = scenario.z(X, Y, T) if full_z else scenario.u(X, Y, T)
    return np.where(mask, vals, np.nan)


# --- convention oracle -------------------------------------------------------

def _d1(f, h, axis):
    def g(*a):
        def at(s):
            b = list(a)
            b[axis] = b[axis] + s
            return f(*b)
        return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
    return g


def pde_residual_oracle(u_sampler, eq: EquationParams, probe, h: float) -> float:
    """Max over ``probe`` points of the scalar KP residual, by O(h^4) differences.

    ``probe`` is a tuple ``(X, Y, T)`` of coordinate arrays.
    """
    X, Y, T = probe

    def uxxx(x, y, t):
        at = lambda s: u_sampler(x + s * h, y, t)
        return (-at(3) + 8 * at(2) - 13 * at(1) + 13 * at(-1) - 8 * at(-2) + at(-3)) / (8 * h ** 3)

    ux = _d1(u_sampler, h, 0)
    ut = _d1(u_sampler, h, 2)

    def flux(x, y, t):
        return (eq.time_factor * ut(x, y, t) + 2 * eq.nonlin_coeff * u_sampler(x, y, t) * ux(x, y, t)
                + uxxx(x, y, t))

    gx = _d1(flux, h, 0)(X, Y, T)
    aty = lambda s: u_sampler(X, Y + s * h, T)
    uyy = (-aty(2) + 16 * aty(1) - 30 * aty(0) + 16 * aty(-1) - aty(-2)) / (12 * h * h)
    return float(np.max(np.abs(gx + eq.sigma * uyy)))


def probe_lattice(center, half_width=1.0, t_half_width=0.2, n=5):
    """Default 5x5x5 probe lattice around ``center = (x, y)`` at t=0."""
    s = np.linspace(-1, 1, n)
    return tuple(np.meshgrid(center[0] + half_width * s, center[1] + half_width * s,
                             t_half_width * s, indexing="ij"))


def refinement_orders(residuals):
    r = np.asarray(residuals, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(r[:-1] / r[1:])


@dataclass
class ConventionVerdict:
    name: str
    candidates: dict          # label -> residuals over the h levels
    orders: dict              # label -> observed orders
    selected: object          # label certified exact, or None
    unambiguous: bool

    def summary(self):
        return f"{self.name}={self.selected}" if self.unambiguous else f"{self.name}=ambiguous"


def _certify(name, runs, order=4.0, order_tol=0.5):
    orders = {lab: refinement_orders(r) for lab, r in runs.items()}
    exact = [lab for lab, o in orders.items() if np.all(np.abs(o - order) <= order_tol)]
    # the rest must stay bounded away from zero: no halving gains a factor 2
    stuck = [lab for lab, o in orders.items() if np.all(o < 1.0)]
    ok = len(exact) == 1 and len(stuck) == len(runs) - 1
    return ConventionVerdict(name, runs, orders, exact[0] if ok else None, ok)


def adjudicate_time_factor(sp: LineSolitonParams = DEFAULT_LINE_SOLITON, sigma=-3.0,
                           hs=(0.1, 0.05, 0.025)) -> ConventionVerdict:
    """Which ``u_t`` coefficient makes the printed line soliton an exact solution.

    The closed form is used with its printed speed ``4k^2 + sigma*lam^2``,
    independent of the candidate being tested.
    """
    base = EquationParams(sigma=sigma)
    usamp = lambda x, y, t: line_soliton_u(x, y, t, sp, base)
    probe = probe_lattice((sp.x_offset, 0.0))
    runs = {}
    for tf in (1, 2):
        eq = EquationParams(sigma=sigma, time_factor=tf)
        runs[tf] = [pde_residual_oracle(usamp, eq, probe, h) for h in hs]
    return _certify("time_factor", runs)


def adjudicate_lump_power(lp: LumpParams = DEFAULT_LUMP, time_factor=1,
                          hs=(0.05, 0.025, 0.0125)) -> ConventionVerdict:
    """Which denominator power makes the printed lump an exact solution."""
    eq = EquationParams(time_factor=time_factor)
    probe = probe_lattice((lp.x0, lp.y0))
    runs = {}
    for power in (1, 2):
        usamp = lambda x, y, t, pw=power: lump_u(x, y, t, lp, EquationParams(), pw)
        runs[power] = [pde_residual_oracle(usamp, eq, probe, h) for h in hs]
    return _certify("lump_denominator_power", runs)


def lifted_plane(scenario: Scenario, grid: GridSpec, k: int) -> np.ndarray:
    X, Y, T = grid.mesh(k)
    return scenario.z(X, Y, T)


def lifted_field(scenario: Scenario, grid: GridSpec) -> np.ndarray:
    """Lifted state on every node; level 0 holds the scenario's initial data."""
    X, Y, T = grid.mesh()
    z = scenario.z(X, Y, T)
    z[:, 0] = scenario.initial_z(X[0], Y[0], grid.t0)
    return z


def exact_u_field(scenario: Scenario, grid: GridSpec) -> np.ndarray:
    X, Y, T = grid.mesh()
    return scenario.u(X, Y, T)


__all__ = [
    "LineSolitonParams", "LumpParams", "Scenario", "DEFAULT_LINE_SOLITON",
    "DEFAULT_TWO_SOLITON", "DEFAULT_LUMP", "line_soliton_u", "two_soliton_initial_u",
    "two_soliton_velocities", "two_soliton_u", "interaction_coefficient", "lump_u",
    "pde_residual_oracle", "boundary_sampler",
    "boundary_mask", "adjudicate_time_factor", "adjudicate_lump_power",
    "ConventionVerdict",
]
