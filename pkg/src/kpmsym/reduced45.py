"""Forty-five-point scheme in the single variable u.

The stencil is obtained by eliminating the nine auxiliary components from
the box equations (see :func:`derive_reduced_scheme`).  A relation
``R^{k+1/2}`` linking two time levels on a 3x5 spatial footprint falls out
of the elimination up to an averaging ``(R^{k-1/2} + R^{k+1/2}) / 2``; that
average is the three-level 45-point scheme stepped here, and ``R`` itself
is exposed as :class:`TwoLevelClosure` for the full scheme's slab solves.

The nonlinear term is ``f = c*ub**2`` with ``ub`` the eight-corner mean of
u around each box centre.  Residuals are scaled so that the weight on
``f`` at ``(i+3/2, j+1/2, k+1/2)`` is ``2/dx**2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import null_space
from scipy.sparse.linalg import splu

from .core import NCOMP, U, EquationParams, GridSpec, time_scale
from .preissman import ConvergenceError, SingularSystemError, SolverOptions, box_operator


class StencilOps:
    """The building-block differences, acting on trailing ``(t, y, x)`` axes.

    Each operator trims the axis it acts on to the points where it is
    defined (``delta_bar`` maps box-centred x data to node-centred output).
    """

    @staticmethod
    def Delta_t0(u):
        u = np.asarray(u, dtype=float)
        return u[..., 2:, :, :] - u[..., :-2, :, :]

    @staticmethod
    def delta_t2(u):
        u = np.asarray(u, dtype=float)
        return u[..., 2:, :, :] + 2 * u[..., 1:-1, :, :] + u[..., :-2, :, :]

    @staticmethod
    def delta_y2(u):
        u = np.asarray(u, dtype=float)
        return u[..., 2:, :] + 2 * u[..., 1:-1, :] + u[..., :-2, :]

    @staticmethod
    def Delta_y2(u):
        u = np.asarray(u, dtype=float)
        return u[..., 2:, :] - 2 * u[..., 1:-1, :] + u[..., :-2, :]

    @staticmethod
    def delta_bar(f):
        f = np.asarray(f, dtype=float)
        return f[..., 3:] - f[..., 2:-1] - f[..., 1:-2] + f[..., :-3]


@dataclass(frozen=True)
class ReducedTable:
    """Stencil weights of the reduced relations.

    ``u45[dk, dj, di]`` multiplies ``u[k-1+dk, j-1+dj, i-2+di]`` and
    ``f45[dk, dj, di]`` the box value at ``(k-1/2+dk, j-1/2+dj, i-3/2+di)``.
    ``u2``/``f2`` are the two-level relation at ``k+1/2``: ``u2[0]`` acts on
    level k, ``u2[1]`` on level k+1.
    """

    u45: np.ndarray
    f45: np.ndarray
    u2: np.ndarray
    f2: np.ndarray

    @property
    def scale(self):
        """Sum of |u weights| of the 45-point relation (residual unit)."""
        return float(np.abs(self.u45).sum())


def _deaverage(w, axis, what):
    """Invert a two-point mean along ``axis``: ``w = (G[:-1] + G[1:]) / 2`` padded.

    ``w`` has one more entry than ``G`` along ``axis``.  Raises if the last
    entry is inconsistent.
    """
    w = np.moveaxis(np.asarray(w, dtype=float), axis, 0)
    G = np.zeros((w.shape[0] - 1,) + w.shape[1:])
    G[0] = 2 * w[0]
    for n in range(1, G.shape[0]):
        G[n] = 2 * w[n] - G[n - 1]
    mismatch = np.abs(2 * w[-1] - G[-1]).max()
    if mismatch > 1e-7 * max(np.abs(w).max(), 1e-300):
        raise SingularSystemError(f"elimination is not a {what}-average (mismatch {mismatch:.2e})")
    return np.moveaxis(G, 0, axis)


@lru_cache(maxsize=32)
def _derive(dx, dy, dt, params: EquationParams):
    window = GridSpec(0.0, 0.0, 0.0, dx, dy, dt, 5, 4, 3)
    A = box_operator(window, params).toarray()
    N = 5 * 4 * 3
    comp = np.arange(NCOMP * N) // N
    aux, ucol = A[:, comp != U], A[:, comp == U]
    # equilibrate rows; left null vectors transform back with the same scaling
    rs = np.abs(A).max(axis=1)
    rs[rs == 0] = 1.0
    Y = null_space((aux / rs[:, None]).T, rcond=1e-10)
    if Y.shape[1] != 1:
        raise SingularSystemError(f"expected a one-dimensional elimination, got {Y.shape[1]}")
    y = Y[:, 0] / rs
    nbox = 4 * 3 * 2
    wu = (y @ ucol).reshape(3, 4, 5)
    wf = -y[U * nbox:(U + 1) * nbox].reshape(2, 3, 4)
    u45 = _deaverage(wu, 1, "y")
    f45 = _deaverage(wf, 1, "y")
    norm = (2.0 / dx ** 2) / f45[1, 1, 3]
    u45, f45 = u45 * norm, f45 * norm
    u2 = 2.0 * np.stack([u45[0], u45[2]])
    f2 = 2.0 * f45[1]
    if not np.allclose(u45[1], 0.5 * (u2[0] + u2[1]), rtol=1e-8, atol=1e-8 * np.abs(u45).max()):
        raise SingularSystemError("elimination is not a time average of a two-level relation")
    if not np.allclose(f45[0], f45[1], rtol=1e-8, atol=1e-8 * np.abs(f45).max()):
        raise SingularSystemError("nonlinear weights differ between time slabs")
    return ReducedTable(u45, f45, u2, f2)


def derive_reduced_scheme(grid: GridSpec, params: EquationParams = EquationParams()) -> ReducedTable:
    """Eliminate the auxiliary components from the linear box operator.

    The operator is assembled on a 5x4x3 window.  Its left null space
    restricted to the auxiliary columns is one-dimensional; the surviving
    combination of box equations is a y-average of the 45-point relation,
    which is undone here.  Results are cached per step sizes and params.
    """
    return _derive(float(grid.dx), float(grid.dy), float(grid.dt), params)


def closed_form_table(grid: GridSpec, params: EquationParams = EquationParams()) -> ReducedTable:
    """The closed-form 45-point weights as outer products of 1-D stencils.

    Each ``(t, y, x)`` factor is one of the :class:`StencilOps` patterns
    (``Delta_t0``, ``delta_t2``, ``delta_y2``, ``Delta_y2``) or an x
    difference.  Independent of the elimination; used to cross-check it.
    ``f2``/``u2`` are filled from the same closed form.
    """
    c = time_scale(params)
    dx, dy, dt = grid.dx, grid.dy, grid.dt
    ty = np.array([1.0, 2.0, 1.0])
    tt = np.array([1.0, 2.0, 1.0])
    dt0 = np.array([-1.0, 0.0, 1.0])
    dy2 = np.array([1.0, -2.0, 1.0])
    ax1 = np.array([-1.0, -2.0, 0.0, 2.0, 1.0])
    ax4 = np.array([1.0, -4.0, 6.0, -4.0, 1.0])
    ax0 = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
    outer = lambda a, b, c_: np.einsum("k,j,i->kji", a, b, c_)
    u45 = (c / (2 * dx * dt) * outer(dt0, ty, ax1)
           + outer(tt, ty, ax4) / dx ** 4
           + params.sigma / (4 * dy ** 2) * outer(tt, dy2, ax0))
    fx = np.array([1.0, -1.0, -1.0, 1.0])
    f45 = 2.0 / dx ** 2 * np.einsum("k,j,i->kji", np.ones(2), np.ones(2), fx)
    u2 = 2.0 * np.stack([u45[0], u45[2]])
    return ReducedTable(u45, f45, u2, 2.0 * f45[1])


# --- residuals ----------------------------------------------------------------

def _check_planes(*planes):
    shape = planes[0].shape
    for p in planes:
        if p.shape != shape:
            raise ValueError("planes do not share a grid")
    ny, nx = shape
    if nx < 5 or ny < 3:
        raise ValueError("45-point residual needs nx >= 5 and ny >= 3")


def box_f(u_lo, u_hi, params: EquationParams):
    """``c * ub**2`` at the box centres of the slab between two planes."""
    s = u_lo + u_hi
    ub = 0.125 * (s[:-1, :-1] + s[1:, :-1] + s[:-1, 1:] + s[1:, 1:])
    return params.nonlin_coeff * ub ** 2


def _apply_u(w, planes):
    ny, nx = planes[0].shape
    out = np.zeros((ny - 2, nx - 4))
    for l, p in enumerate(planes):
        for dj in range(3):
            for di in range(5):
                if w[l, dj, di] != 0:
                    out += w[l, dj, di] * p[dj:dj + ny - 2, di:di + nx - 4]
    return out


def _apply_f(wf, fplanes):
    nyb, nxb = fplanes[0].shape
    out = np.zeros((nyb - 1, nxb - 3))
    for l, f in enumerate(fplanes):
        for dj in range(2):
            for di in range(4):
                out += wf[l, dj, di] * f[dj:dj + nyb - 1, di:di + nxb - 3]
    return out


def _embed(interior):
    ny, nx = interior.shape[0] + 2, interior.shape[1] + 4
    out = np.zeros((ny, nx))
    out[1:-1, 2:-2] = interior
    return out


def residual_45(u_prev, u_curr, u_next, grid: GridSpec, params: EquationParams = EquationParams(),
                table: ReducedTable | None = None) -> np.ndarray:
    """45-point residual at every interior node; zero on the boundary band."""
    planes = [np.asarray(p, dtype=float) for p in (u_prev, u_curr, u_next)]
    _check_planes(*planes)
    t = derive_reduced_scheme(grid, params) if table is None else table
    f_lo, f_hi = box_f(planes[0], planes[1], params), box_f(planes[1], planes[2], params)
    return _embed(_apply_u(t.u45, planes) + _apply_f(t.f45, [f_lo, f_hi]))


def residual_two_level(u_lo, u_hi, grid: GridSpec, params: EquationParams = EquationParams(),
                       table: ReducedTable | None = None) -> np.ndarray:
    """The relation ``R^{k+1/2}`` between two consecutive levels."""
    planes = [np.asarray(p, dtype=float) for p in (u_lo, u_hi)]
    _check_planes(*planes)
    t = derive_reduced_scheme(grid, params) if table is None else table
    return _embed(_apply_u(t.u2, planes) + _apply_f(t.f2[None], [box_f(*planes, params)]))


# --- sparse Jacobian pieces ---------------------------------------------------

def _node_stencil_matrix(w, ny, nx):
    """(interior nodes) x (all nodes) matrix applying a 3x5 stencil."""
    jj, ii = np.meshgrid(np.arange(1, ny - 1), np.arange(2, nx - 2), indexing="ij")
    rows = ((jj - 1) * (nx - 4) + (ii - 2)).ravel()
    R, C, D = [], [], []
    for dj in range(3):
        for di in range(5):
            if w[dj, di] != 0:
                R.append(rows)
                C.append(((jj + dj - 1) * nx + ii + di - 2).ravel())
                D.append(np.full(rows.size, w[dj, di]))
    shape = ((ny - 2) * (nx - 4), ny * nx)
    if not R:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((np.concatenate(D), (np.concatenate(R), np.concatenate(C))), shape=shape)


def _box_stencil_matrix(wf, ny, nx):
    """(interior nodes) x (boxes) matrix applying a 2x4 box stencil."""
    jj, ii = np.meshgrid(np.arange(1, ny - 1), np.arange(2, nx - 2), indexing="ij")
    rows = ((jj - 1) * (nx - 4) + (ii - 2)).ravel()
    R, C, D = [], [], []
    for dj in range(2):
        for di in range(4):
            R.append(rows)
            C.append(((jj - 1 + dj) * (nx - 1) + ii - 2 + di).ravel())
            D.append(np.full(rows.size, wf[dj, di]))
    return sp.csr_matrix((np.concatenate(D), (np.concatenate(R), np.concatenate(C))),
                         shape=((ny - 2) * (nx - 4), (ny - 1) * (nx - 1)))


def _corner_mean(ny, nx):
    ay = sp.diags([0.5, 0.5], [0, 1], shape=(ny - 1, ny))
    ax = sp.diags([0.5, 0.5], [0, 1], shape=(nx - 1, nx))
    return sp.kron(ay, ax, format="csr")


class TwoLevelClosure:
    """Rows of ``R^{k+1/2}`` on the first interior y-row, scaled to unit weight sum."""

    def __init__(self, grid: GridSpec, params: EquationParams, row: int = 1):
        self.grid, self.params = grid, params
        self.table = derive_reduced_scheme(grid, params)
        ny, nx = grid.ny, grid.nx
        self.row = row
        self.rows = np.arange((row - 1) * (nx - 4), row * (nx - 4))
        self.scale = float(np.abs(self.table.u2).sum())
        t = self.table
        self._lo = _node_stencil_matrix(t.u2[0], ny, nx)[self.rows]
        self._hi = _node_stencil_matrix(t.u2[1], ny, nx)[self.rows]
        self._wf = _box_stencil_matrix(t.f2, ny, nx)[self.rows]
        self._A2 = _corner_mean(ny, nx)

    def residual(self, u_lo, u_hi):
        r = residual_two_level(u_lo, u_hi, self.grid, self.params, self.table)
        return r[self.row, 2:-2] / self.scale

    def _dF(self, u_lo, u_hi):
        ub = self._A2 @ (0.5 * (np.ravel(u_lo) + np.ravel(u_hi)))
        return self._wf @ sp.diags(self.params.nonlin_coeff * ub) @ self._A2

    def jacobian_upper(self, u_lo, u_hi):
        return ((self._hi + self._dF(u_lo, u_hi)) / self.scale).tocsr()

    def jacobian_lower(self, u_lo, u_hi):
        return ((self._lo + self._dF(u_lo, u_hi)) / self.scale).tocsr()


# --- stepping -----------------------------------------------------------------

@dataclass
class ThreeLevelState:
    u_prev: np.ndarray
    u_curr: np.ndarray
    k_index: int = 1

    def __post_init__(self):
        self.u_prev = np.asarray(self.u_prev, dtype=float)
        self.u_curr = np.asarray(self.u_curr, dtype=float)
        if self.u_prev.shape != self.u_curr.shape or self.u_prev.ndim != 2:
            raise ValueError("u_prev and u_curr must be planes of the same shape")
        if not (np.all(np.isfinite(self.u_prev)) and np.all(np.isfinite(self.u_curr))):
            raise ValueError("state planes must be finite")

    def advance(self, u_next):
        return ThreeLevelState(self.u_curr, u_next, self.k_index + 1)


def band_mask(ny, nx):
    m = np.zeros((ny, nx), bool)
    m[:, :2] = m[:, -2:] = True
    m[0] = m[-1] = True
    return m


class ReducedStepper:
    """Newton solver for ``u^{k+1}`` with cached stencil matrices.

    The stopping test is ``max|residual_45| / table.scale <= opts.tol_residual``.
    The Jacobian is factored once per step and refreshed only when the
    iteration stalls.
    """

    def __init__(self, grid: GridSpec, params: EquationParams = EquationParams(),
                 opts: SolverOptions = SolverOptions(), table: ReducedTable | None = None):
        if grid.nx < 5 or grid.ny < 3:
            raise ValueError("45-point stepping needs nx >= 5 and ny >= 3")
        self.grid, self.params, self.opts = grid, params, opts
        self.table = derive_reduced_scheme(grid, params) if table is None else table
        ny, nx = grid.ny, grid.nx
        self.interior = ~band_mask(ny, nx)
        cols = np.flatnonzero(self.interior.ravel())
        self._lin = _node_stencil_matrix(self.table.u45[2], ny, nx)[:, cols].tocsc()
        self._wf = _box_stencil_matrix(self.table.f45[1], ny, nx)
        self._A2 = _corner_mean(ny, nx)[:, cols].tocsr()
        self.last_iterations = 0
        self.last_residual = 0.0

    def _jacobian(self, u_curr, u_next):
        s = u_curr + u_next
        ub = 0.125 * (s[:-1, :-1] + s[1:, :-1] + s[:-1, 1:] + s[1:, 1:]).ravel()
        dF = self._wf @ sp.diags(self.params.nonlin_coeff * ub) @ self._A2
        return (self._lin + dF).tocsc()

    def _factor(self, J):
        try:
            return splu(J)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc

    def step(self, state: ThreeLevelState, boundary_next) -> np.ndarray:
        b = np.asarray(boundary_next, dtype=float)
        if b.shape != state.u_curr.shape:
            raise ValueError("boundary plane has the wrong shape")
        band = ~self.interior
        if not np.all(np.isfinite(b[band])):
            raise ValueError("boundary band values must be finite")
        u = 2 * state.u_curr - state.u_prev
        u[band] = b[band]
        scale, tol = self.table.scale, self.opts.tol_residual
        lu, prev = None, np.inf
        for it in range(self.opts.max_iters + 1):
            r = residual_45(state.u_prev, state.u_curr, u, self.grid, self.params, self.table)
            res = float(np.abs(r).max()) / scale
            if not np.isfinite(res):
                break
            if res <= tol:
                self.last_iterations, self.last_residual = it, res
                return u
            if lu is None or res > 0.25 * prev or self.opts.method == "newton" and it % 4 == 3:
                J = self._jacobian(state.u_curr, u) if self.opts.method == "newton" or lu is None else None
                if J is not None:
                    lu = self._factor(J)
            prev = res
            d = lu.solve(-r[self.interior])
            u[self.interior] += self.opts.damping * d
        raise ConvergenceError("45-point step did not converge", res, it)


def step(state: ThreeLevelState, boundary_data, grid: GridSpec,
         params: EquationParams = EquationParams(), opts: SolverOptions = SolverOptions()):
    """One implicit step; ``boundary_data`` is the level-(k+1) plane whose band is used."""
    return ReducedStepper(grid, params, opts).step(state, boundary_data)


def startup(scenario, grid: GridSpec, mode: str = "exact_two_planes",
            opts: SolverOptions = SolverOptions()) -> ThreeLevelState:
    """Two starting planes, sampled exactly or with u^1 from one full box-scheme step."""
    X0, Y0, _ = grid.mesh(0)
    X1, Y1, T1 = grid.mesh(1)
    u0 = scenario.initial_u(X0, Y0, grid.t0)
    if mode == "exact_two_planes":
        return ThreeLevelState(u0, scenario.u(X1, Y1, T1), 1)
    if mode == "preissman_one_step":
        from .preissman import solve_global
        from .solutions import lifted_field
        g2 = grid.with_nt(2)
        z = lifted_field(scenario, g2)
        sol = solve_global(z[:, 0], z, g2, scenario.eq, opts)
        return ThreeLevelState(u0, sol.field.values[U, 1], 1)
    raise ValueError(f"unknown startup mode {mode!r}")
