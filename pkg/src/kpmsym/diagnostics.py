"""Error norms, wave tracking, drift monitors and conservation-law checks."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .core import EquationParams, GridSpec, fd_potential_sampler


# --- norms and orders ---------------------------------------------------------

def _weights(grid: GridSpec):
    wx = np.full(grid.nx, grid.dx)
    wx[[0, -1]] *= 0.5
    wy = np.full(grid.ny, grid.dy)
    wy[[0, -1]] *= 0.5
    return np.outer(wy, wx)


def error_norms(u_plane, scenario, grid: GridSpec, k: int):
    """``(l2, linf)`` of ``u_plane - exact`` at level ``k``.

    The L2 norm uses trapezoid cell weights, so a constant error ``e`` gives
    ``e * sqrt(area)``.
    """
    if not scenario.has_exact_solution:
        raise ValueError(f"scenario {scenario.kind!r} has no exact solution")
    X, Y, T = grid.mesh(k)
    e = np.asarray(u_plane, dtype=float) - scenario.u(X, Y, T)
    return float(np.sqrt(np.sum(_weights(grid) * e ** 2))), float(np.abs(e).max())


def mass_integral(u_plane, grid: GridSpec) -> float:
    """Trapezoid-rule integral of u over the spatial rectangle."""
    inner = trapezoid(np.asarray(u_plane, dtype=float), dx=grid.dx, axis=1)
    return float(trapezoid(inner, dx=grid.dy))


def convergence_order(e_coarse, e_fine) -> float:
    """``log2(e_coarse / e_fine)`` for one halving."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError("errors must be positive to estimate an order")
    return float(np.log2(e_coarse / e_fine))


# --- tracking -----------------------------------------------------------------

class PeakTrackingError(ValueError):
    pass


class Peak(NamedTuple):
    x: float
    y: float
    amplitude: float


class CrestLine(NamedTuple):
    x_intercept: float  # crest position at y = 0
    slope: float  # dx/dy along the crest
    amplitude: float  # mean of the per-row refined maxima
    rows: np.ndarray  # (ny, 2): refined crest x and height per row


def _parabola(fm, f0, fp):
    """Vertex offset (in cells) and height of the parabola through 3 samples."""
    curv = fm - 2 * f0 + fp
    if curv >= 0:
        return 0.0, f0
    off = 0.5 * (fm - fp) / curv
    if abs(off) > 1:
        return 0.0, f0
    return off, f0 - 0.25 * (fm - fp) * off


def _point_peak(u, grid):
    j, i = np.unravel_index(np.argmax(u), u.shape)
    if not (0 < i < grid.nx - 1 and 0 < j < grid.ny - 1):
        raise PeakTrackingError("peak lies on the boundary")
    w = u[j - 1:j + 2, i - 1:i + 2]
    f0 = w[1, 1]
    gx, gy = 0.5 * (w[1, 2] - w[1, 0]), 0.5 * (w[2, 1] - w[0, 1])
    hxx, hyy = w[1, 2] - 2 * f0 + w[1, 0], w[2, 1] - 2 * f0 + w[0, 1]
    hxy = 0.25 * (w[2, 2] - w[2, 0] - w[0, 2] + w[0, 0])
    H = np.array([[hxx, hxy], [hxy, hyy]])
    g = np.array([gx, gy])
    if np.all(np.linalg.eigvalsh(H) < 0):
        s = -np.linalg.solve(H, g)
        if np.all(np.abs(s) <= 1):
            amp = f0 + 0.5 * g @ s
            return Peak(grid.x[i] + s[0] * grid.dx, grid.y[j] + s[1] * grid.dy, float(amp))
    return Peak(float(grid.x[i]), float(grid.y[j]), float(f0))


def _crest_line(u, grid, x_window):
    lo, hi = (0, grid.nx) if x_window is None else (
        int(np.searchsorted(grid.x, x_window[0] - 1e-12)),
        int(np.searchsorted(grid.x, x_window[1] + 1e-12)))
    rows = np.zeros((grid.ny, 2))
    for j in range(grid.ny):
        seg = u[j, lo:hi]
        i = lo + int(np.argmax(seg))
        if i == 0 or i == grid.nx - 1 or (x_window is not None and (i == lo or i == hi - 1)):
            raise PeakTrackingError(f"crest at the edge of the search range in row {j}")
        off, amp = _parabola(u[j, i - 1], u[j, i], u[j, i + 1])
        rows[j] = grid.x[i] + off * grid.dx, amp
    slope, icpt = np.polyfit(grid.y, rows[:, 0], 1)
    return CrestLine(float(icpt), float(slope), float(rows[:, 1].mean()), rows)


def peak_track(u_plane, grid: GridSpec, mode: str = "point_peak", x_window=None):
    """Locate a lump peak (``point_peak``) or a line-soliton crest (``crest_line``).

    ``x_window`` restricts the crest search to ``[x_lo, x_hi]``, for
    following one of several crests.
    """
    u = np.asarray(u_plane, dtype=float)
    if u.shape != (grid.ny, grid.nx):
        raise ValueError("plane does not match the grid")
    if mode == "point_peak":
        return _point_peak(u, grid)
    if mode == "crest_line":
        return _crest_line(u, grid, x_window)
    raise ValueError(f"unknown tracking mode {mode!r}")


def separate_crests(u_plane, grid: GridSpec, count: int = 2, min_height: float = 0.2):
    """Follow ``count`` line crests that are separated in every row.

    Each row's ``count`` highest local maxima are taken in x order and
    refined; crest ``n`` is the line fitted through the n-th maxima.  Raises
    :class:`PeakTrackingError` when some row does not show ``count`` maxima
    (e.g. during a collision).
    """
    u = np.asarray(u_plane, dtype=float)
    per_row = []
    for j in range(grid.ny):
        r = u[j]
        idx = [i for i in range(1, grid.nx - 1)
               if r[i] > r[i - 1] and r[i] >= r[i + 1] and r[i] > min_height]
        if len(idx) < count:
            raise PeakTrackingError(f"row {j} shows {len(idx)} crests, expected {count}")
        idx = sorted(sorted(idx, key=lambda i: r[i])[-count:])
        per_row.append([(grid.x[i] + o * grid.dx, a) for i in idx
                        for o, a in [_parabola(r[i - 1], r[i], r[i + 1])]])
    per_row = np.array(per_row)  # (ny, count, 2)
    out = []
    for n in range(count):
        rows = per_row[:, n]
        slope, icpt = np.polyfit(grid.y, rows[:, 0], 1)
        out.append(CrestLine(float(icpt), float(slope), float(rows[:, 1].mean()), rows))
    return out


def track_velocity(times, positions) -> float:
    """Least-squares slope of position against time."""
    return float(np.polyfit(np.asarray(times, float), np.asarray(positions, float), 1)[0])


# --- continuous conservation law ----------------------------------------------

JET_ORDER = ("phi", "x", "xx", "xy", "xt", "xxx", "xyy", "xxt", "xxxx", "xxxxx")


@dataclass(frozen=True)
class JetVector10:
    """Potential jet components of a tangent field, stacked in :data:`JET_ORDER`."""

    values: np.ndarray  # (10, ...)

    @classmethod
    def from_derivs(cls, d):
        return cls(np.stack([np.asarray(d[k], dtype=float) for k in JET_ORDER]))


def form_matrices(phi_xx, phi_xxx, params: EquationParams = EquationParams()):
    """``(Mt, Mx, My)`` acting on jets; Mx depends on the base through
    ``phi_xx`` and ``phi_xxx`` and carries their trailing shape."""
    phi_xx = np.asarray(phi_xx, dtype=float)
    shape = (10, 10) + phi_xx.shape
    tf, a2, sig = params.time_factor, 2 * params.nonlin_coeff, params.sigma
    Mt = np.zeros(shape)
    Mx = np.zeros(shape)
    My = np.zeros(shape)
    Mt[1, 2] = tf / 2
    My[1, 3] = sig
    for (r, c), val in {(0, 2): -a2 * np.asarray(phi_xxx), (0, 5): -a2 * phi_xx, (0, 6): -sig,
                        (0, 7): -tf, (0, 9): -1.0, (1, 2): a2 * phi_xx, (1, 4): tf / 2,
                        (1, 8): 1.0, (2, 5): -1.0}.items():
        Mx[r, c] = val
    for M in (Mt, Mx, My):
        M -= np.swapaxes(M, 0, 1)
    return Mt, Mx, My


def bilinear(M, a: JetVector10, b: JetVector10):
    """``a^T M b`` pointwise for antisymmetric ``M``.

    Summed as ``M_ij (a_i b_j - a_j b_i)`` over ``i < j`` so that equal
    arguments give exactly zero.
    """
    av, bv = a.values, b.values
    out = np.zeros(np.broadcast_shapes(av.shape[1:], M.shape[2:]))
    for i in range(10):
        for j in range(i + 1, 10):
            if np.any(M[i, j] != 0):
                out = out + M[i, j] * (av[i] * bv[j] - av[j] * bv[i])
    return out


def family_tangent(scenario, eps: float = 1e-5, **param_step) -> Callable:
    """Centered parameter difference of a closed-form family.

    ``param_step`` names one field of ``scenario.params`` (e.g. ``x_offset=1``
    or ``k=1``); the returned callable gives the tangent's potential
    derivatives at points.
    """
    (name, scale), = param_step.items()
    p0 = scenario.params

    def at(sign):
        return replace(scenario, params=replace(p0, **{name: getattr(p0, name) + sign * eps * scale}))

    plus, minus = at(1), at(-1)

    def derivs(x, y, t):
        dp, dm = plus.potential(x, y, t), minus.potential(x, y, t)
        return {k: (dp[k] - dm[k]) / (2 * eps) for k in JET_ORDER}

    return derivs


def field_tangent(phi: Callable, h: float = 1e-2) -> Callable:
    """Tangent from an arbitrary smooth scalar field, jets by finite differences."""
    return fd_potential_sampler(phi, h)


def continuous_msym_divergence(base_scenario, tangent_a: Callable, tangent_b: Callable,
                               points, h: float, params: EquationParams | None = None):
    """Centered-difference divergence of the three forms at probe points.

    ``points`` is ``(X, Y, T)``; each tangent returns potential derivatives
    at arbitrary points.  Returns the divergence array.
    """
    params = base_scenario.eq if params is None else params
    X, Y, T = (np.asarray(a, dtype=float) for a in points)

    def forms(x, y, t):
        base = base_scenario.potential(x, y, t)
        Mt, Mx, My = form_matrices(base["xx"], base["xxx"], params)
        ja, jb = JetVector10.from_derivs(tangent_a(x, y, t)), JetVector10.from_derivs(tangent_b(x, y, t))
        return bilinear(Mt, ja, jb), bilinear(Mx, ja, jb), bilinear(My, ja, jb)

    div = (forms(X, Y, T + h)[0] - forms(X, Y, T - h)[0]
           + forms(X + h, Y, T)[1] - forms(X - h, Y, T)[1]
           + forms(X, Y + h, T)[2] - forms(X, Y - h, T)[2]) / (2 * h)
    return div


def continuous_msym_check(base_scenario, tangent_a, tangent_b, points, h, params=None) -> float:
    """Max |divergence| over the probe points."""
    return float(np.abs(continuous_msym_divergence(base_scenario, tangent_a, tangent_b,
                                                   points, h, params)).max())


def probe_points(center, half_width=1.0, n=5, t_half_width=0.2):
    cx, cy, ct = center
    ax = np.linspace(-1, 1, n)
    T, Y, X = np.meshgrid(ct + t_half_width * ax, cy + half_width * ax, cx + half_width * ax,
                          indexing="ij")
    return X, Y, T


def continuous_refinement(base_scenario, steps, center=None, n=5):
    """Residuals of the x0/k tangent pair for a list of ``(h, eps)`` steps."""
    center = (base_scenario.params.x_offset, 0.0, 0.0) if center is None else center
    pts = probe_points(center, n=n)
    out = []
    for h, eps in steps:
        ta = family_tangent(base_scenario, eps, x_offset=1.0)
        tb = family_tangent(base_scenario, eps, k=1.0)
        out.append(continuous_msym_check(base_scenario, ta, tb, pts, h))
    return out


# --- report -------------------------------------------------------------------

@dataclass
class RunReport:
    l2_error: float = float("nan")
    linf_error: float = float("nan")
    peak_tracks: list = field(default_factory=list)  # (t, position, amplitude)
    conservation_residuals: dict = field(default_factory=dict)
    convergence_orders: dict = field(default_factory=dict)

    def add_track(self, t, position, amplitude):
        if self.peak_tracks and t < self.peak_tracks[-1][0]:
            raise ValueError("track times must be monotone")
        self.peak_tracks.append((float(t), position, float(amplitude)))
