"""The Preissman box scheme for the ten-component system.

Every box ``(i+1/2, j+1/2, k+1/2)`` carries the ten equations

    c/dt M (Z^t+ - Z^t-) + 1/dx K (Z^x+ - Z^x-) + 1/dy L (Z^y+ - Z^y-) = grad S(Z^box)

where ``Z^t+`` is the four-corner mean on the upper time face and so on,
and ``c`` is :func:`kpmsym.core.time_scale`.

Slab solves
-----------
The global system is solved one time slab at a time.  With exact data on the
whole spatial boundary the box equations are overdetermined, and with only
the scalar ``u`` prescribed on its band they leave a gauge freedom in the
auxiliary components plus one row of freedom in ``u`` itself (a
y-checkerboard of the reduced residual).  Each slab therefore solves

* all box equations,
* the two-level reduced relation on the first interior y-row (closure),
* with ``u`` fixed on the band (2 columns in x, 1 row in y),

and fixes the remaining gauge by the minimum-norm correction from a guess
that carries the exact boundary values.  The resulting ``u`` is unique.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import (NCOMP, PHI, PX, PXT, PXX, PXXX, PXY, U, V, EquationParams, Field,
                   GridSpec, build_matrices, grad_S, hess_S, time_scale)

AXIS = {"t": -3, "y": -2, "x": -1}
U_BAND = (2, 1)


class ConvergenceError(RuntimeError):
    """Nonlinear iteration did not reach the residual tolerance."""

    def __init__(self, message, residual, iterations, slab=None):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations"
                         + (f", slab {slab})" if slab is not None else ")"))
        self.residual = residual
        self.iterations = iterations
        self.slab = slab


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tol_residual: float = 1e-10
    max_iters: int = 50
    method: str = "newton"
    fd_jacobian_step: float = 1e-7
    damping: float = 1.0

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.method not in ("newton", "fixed_point"):
            raise ValueError("method must be 'newton' or 'fixed_point'")


@dataclass
class BoxResidual:
    grid: GridSpec
    values: np.ndarray  # (10, nt-1, ny-1, nx-1), indexed by the box's lower corner

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def box_average(values, axes) -> np.ndarray:
    """Mean over the ``2**len(axes)`` corners along the named axes.

    ``values`` has trailing axes ``(t, y, x)``; each averaged axis shrinks
    by one.
    """
    out = np.asarray(values, dtype=float)
    if isinstance(values, Field):
        out = values.values
    for name in set(axes):
        ax = AXIS[name]
        if out.shape[ax] < 2:
            raise ValueError(f"axis {name} needs at least 2 points to average")
        n = out.shape[ax]
        lo = np.take(out, range(n - 1), axis=ax)
        hi = np.take(out, range(1, n), axis=ax)
        out = 0.5 * (lo + hi)
    return out


def _diff(values, name, h):
    ax = AXIS[name]
    n = values.shape[ax]
    return (np.take(values, range(1, n), axis=ax) - np.take(values, range(n - 1), axis=ax)) / h


def _apply(A, z):
    return np.einsum("ab,b...->a...", A, z)


def box_residual_values(z, grid: GridSpec, params: EquationParams) -> np.ndarray:
    M, K, L = build_matrices()
    c = time_scale(params)
    zt = _diff(box_average(z, "xy"), "t", grid.dt)
    zx = _diff(box_average(z, "yt"), "x", grid.dx)
    zy = _diff(box_average(z, "xt"), "y", grid.dy)
    zbox = box_average(z, "xyt")
    return c * _apply(M, zt) + _apply(K, zx) + _apply(L, zy) - grad_S(zbox, params)


def scheme_residual(zfield: Field, params: EquationParams) -> BoxResidual:
    g = zfield.grid
    if zfield.component_count != NCOMP:
        raise ValueError("scheme_residual needs a 10-component field")
    return BoxResidual(g, box_residual_values(zfield.values, g, params))


# --- sparse operators ---------------------------------------------------------

def _avg1(n):
    return sp.diags([0.5, 0.5], [0, 1], shape=(n - 1, n), format="csr")


def _dif1(n, h):
    return sp.diags([-1.0 / h, 1.0 / h], [0, 1], shape=(n - 1, n), format="csr")


@dataclass
class PlaneOps:
    """Node-plane to box-plane operators on the flattened ``(j, i)`` index."""

    grid: GridSpec
    A2: sp.csr_matrix = field(init=False)
    DX: sp.csr_matrix = field(init=False)
    DY: sp.csr_matrix = field(init=False)

    def __post_init__(self):
        g = self.grid
        ax, ay = _avg1(g.nx), _avg1(g.ny)
        self.A2 = sp.kron(ay, ax, format="csr")
        self.DX = sp.kron(ay, _dif1(g.nx, g.dx), format="csr")
        self.DY = sp.kron(_dif1(g.ny, g.dy), ax, format="csr")

    @property
    def nbox(self):
        return self.A2.shape[0]

    @property
    def nnode(self):
        return self.A2.shape[1]


def _unit(a, b):
    E = np.zeros((NCOMP, NCOMP))
    E[a, b] = 1.0
    return sp.csr_matrix(E)


def slab_jacobians(ops: PlaneOps, ubox, params: EquationParams):
    """Derivatives of a slab's box residuals w.r.t. the lower and upper planes.

    Rows are ``comp * nbox + box``, columns ``comp * nnode + node``.
    ``ubox`` is the box-centre u used in the Hessian.
    """
    M, K, L = build_matrices()
    c = time_scale(params)
    H0 = hess_S(0.0, params)
    dt = ops.grid.dt
    common = (sp.kron(sp.csr_matrix(K), 0.5 * ops.DX) + sp.kron(sp.csr_matrix(L), 0.5 * ops.DY)
              - sp.kron(sp.csr_matrix(H0), 0.5 * ops.A2))
    nonlin = sp.kron(_unit(U, U), sp.diags(np.ravel(ubox) * params.nonlin_coeff) @ ops.A2)
    tpart = sp.kron(sp.csr_matrix(c * M / dt), ops.A2)
    J1 = (common + tpart - nonlin).tocsr()
    J0 = (common - tpart - nonlin).tocsr()
    return J0, J1


def box_operator(grid: GridSpec, params: EquationParams) -> sp.csr_matrix:
    """Linear part of the full space-time box operator (Hessian at u=0).

    Rows ``comp * nbox + box`` with boxes flattened as ``(k, j, i)``; columns
    ``comp * nnode + node`` with nodes flattened as ``(k, j, i)``.  The
    nonlinear term enters the u-row of each box as ``-c*ubox**2``.
    """
    M, K, L = build_matrices()
    c = time_scale(params)
    ax, ay, at = _avg1(grid.nx), _avg1(grid.ny), _avg1(grid.nt)
    dx, dy, dt = _dif1(grid.nx, grid.dx), _dif1(grid.ny, grid.dy), _dif1(grid.nt, grid.dt)
    kron3 = lambda a, b, c_: sp.kron(a, sp.kron(b, c_))
    H0 = hess_S(0.0, params)
    op = (sp.kron(sp.csr_matrix(c * M), kron3(dt, ay, ax))
          + sp.kron(sp.csr_matrix(K), kron3(at, ay, dx))
          + sp.kron(sp.csr_matrix(L), kron3(at, dy, ax))
          - sp.kron(sp.csr_matrix(H0), kron3(at, ay, ax)))
    return op.tocsr()


# --- slab solver --------------------------------------------------------------

def _closure(grid, params):
    from .reduced45 import TwoLevelClosure
    return TwoLevelClosure(grid, params)


def _fixed_mask(grid):
    """Node-components held fixed in a slab solve: u on its band."""
    from .solutions import boundary_mask
    fixed = np.zeros((NCOMP, grid.ny, grid.nx), bool)
    fixed[U] = boundary_mask(grid, *U_BAND)
    return fixed


def _guess(prev, boundary_plane, grid):
    """Previous plane inside, prescribed values on the outer frame and u band."""
    from .solutions import boundary_mask
    g = prev.copy()
    frame = boundary_mask(grid, 1, 1)
    g[:, frame] = boundary_plane[:, frame]
    band = boundary_mask(grid, *U_BAND)
    g[U, band] = boundary_plane[U, band]
    return g


class _KKT:
    """Minimum-norm solver for ``A d = b`` (A wide, full row rank)."""

    def __init__(self, A):
        n, m = A.shape[1], A.shape[0]
        kkt = sp.bmat([[sp.identity(n), A.T], [A, None]], format="csc")
        try:
            self.lu = splu(kkt)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc
        self.n, self.m = n, m

    def solve(self, b):
        rhs = np.concatenate([np.zeros(self.n), b])
        sol = self.lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SingularSystemError("non-finite solution of the slab system")
        return sol[:self.n]


def _check_grid(grid):
    if grid.nx < 5 or grid.ny < 3:
        raise ValueError("slab solves need nx >= 5 and ny >= 3")


@dataclass
class PreissmanSolution:
    field: Field
    max_residual: float
    iterations: list


def solve_global(initial_data, boundary_data, grid: GridSpec, params: EquationParams,
                 opts: SolverOptions = SolverOptions(), n_slabs=None) -> PreissmanSolution:
    """Solve the box scheme slab by slab.

    ``initial_data`` is the ``(10, ny, nx)`` plane at ``k=0``;
    ``boundary_data`` a ``(10, nt, ny, nx)`` array whose boundary entries are
    the prescribed values (the interior is ignored).  Raises
    :class:`ConvergenceError` when a slab misses ``opts.tol_residual``.
    """
    _check_grid(grid)
    nt = grid.nt if n_slabs is None else n_slabs + 1
    ops = PlaneOps(grid)
    closure = _closure(grid, params)
    fixed = _fixed_mask(grid).ravel()
    free = ~fixed
    N = ops.nnode
    z = np.zeros((NCOMP, nt, grid.ny, grid.nx))
    z[:, 0] = initial_data
    iters = []
    worst = 0.0
    for k in range(nt - 1):
        z0 = z[:, k]
        z1 = _guess(z0, np.asarray(boundary_data[:, k + 1], dtype=float), grid)
        lin_kkt = None
        for it in range(1, opts.max_iters + 1):
            pair = np.stack([z0, z1], axis=1)
            rbox = box_residual_values(pair, grid.with_nt(2), params)[:, 0]
            rcl = closure.residual(z0[U], z1[U])
            res = max(np.abs(rbox).max(), np.abs(rcl).max())
            if res <= opts.tol_residual:
                break
            if it == opts.max_iters:
                raise ConvergenceError("Preissman slab did not converge", res, it, k)
            if opts.method == "newton" or lin_kkt is None:
                ubox = box_average(pair[U], "xyt")[0] if opts.method == "newton" else 0.0 * rbox[U]
                _, J1 = slab_jacobians(ops, ubox, params)
                C1 = closure.jacobian_upper(z0[U], z1[U] if opts.method == "newton" else 0 * z1[U])
                Cfull = sp.hstack([sp.csr_matrix((C1.shape[0], U * N)), C1,
                                   sp.csr_matrix((C1.shape[0], (NCOMP - U - 1) * N))])
                A = sp.vstack([J1, Cfull]).tocsr()[:, free]
                kkt = _KKT(A)
                if opts.method == "fixed_point":
                    lin_kkt = kkt
            else:
                kkt = lin_kkt
            d = kkt.solve(-np.concatenate([rbox.ravel(), rcl]))
            upd = np.zeros(NCOMP * N)
            upd[free] = opts.damping * d
            z1 = z1 + upd.reshape(z1.shape)
        worst = max(worst, res)
        iters.append(it)
        z[:, k + 1] = z1
    return PreissmanSolution(Field(grid.with_nt(nt), z), worst, iters)


def solve_tangent(base: Field, tangent_initial, tangent_boundary, params: EquationParams) -> Field:
    """Solve the box scheme linearised about ``base``, slab by slab.

    Uses the same closure, band and minimum-norm gauge as
    :func:`solve_global`; each slab is one linear solve.
    """
    grid = base.grid
    _check_grid(grid)
    ops = PlaneOps(grid)
    closure = _closure(grid, params)
    free = ~_fixed_mask(grid).ravel()
    N = ops.nnode
    zb = base.values
    dz = np.zeros_like(zb)
    dz[:, 0] = tangent_initial
    tb = np.asarray(tangent_boundary, dtype=float)
    for k in range(grid.nt - 1):
        ubox = box_average(zb[U, k:k + 2], "xyt")[0]
        J0, J1 = slab_jacobians(ops, ubox, params)
        C0, C1 = closure.jacobian_lower(zb[U, k], zb[U, k + 1]), closure.jacobian_upper(zb[U, k], zb[U, k + 1])
        pad = lambda C: sp.hstack([sp.csr_matrix((C.shape[0], U * N)), C,
                                   sp.csr_matrix((C.shape[0], (NCOMP - U - 1) * N))])
        A_full = sp.vstack([J1, pad(C1)]).tocsr()
        guess = _guess(dz[:, k], tb[:, k + 1], grid).ravel()
        rhs = -(sp.vstack([J0, pad(C0)]) @ dz[:, k].ravel()) - A_full @ guess
        d = _KKT(A_full[:, free]).solve(rhs)
        new = guess.copy()
        new[free] += d
        dz[:, k + 1] = new.reshape(dz[:, k].shape)
    return Field(grid, dz)


def tangent_box_residual(base: Field, tangent: Field, params: EquationParams) -> np.ndarray:
    """Residual of the linearised box equations for ``tangent`` about ``base``."""
    g = base.grid
    M, K, L = build_matrices()
    c = time_scale(params)
    dz = tangent.values
    zt = _diff(box_average(dz, "xy"), "t", g.dt)
    zx = _diff(box_average(dz, "yt"), "x", g.dx)
    zy = _diff(box_average(dz, "xt"), "y", g.dy)
    dbox = box_average(dz, "xyt")
    ubox = box_average(base.values[U], "xyt")
    H = hess_S(ubox, params)
    return c * _apply(M, zt) + _apply(K, zx) + _apply(L, zy) - np.einsum("ab...,b...->a...", H, dbox)


def _wedge(Uf, Vf, a, b):
    return Uf[a] * Vf[b] - Vf[a] * Uf[b]


def discrete_msym_residual(Ut: Field, Vt: Field, params: EquationParams = EquationParams()) -> Field:
    """Per-box discrete divergence of the multisymplectic two-forms.

    Each ``dA ^ dB`` is evaluated on the pair as ``A_U B_V - A_V B_U`` at the
    face-centre values.  Returned as a ``(nt-1, ny-1, nx-1)`` scalar array
    wrapped in a Field on the box-centre grid.
    """
    if Ut.grid != Vt.grid:
        raise ValueError("tangent fields live on different grids")
    g = Ut.grid
    c = time_scale(params)
    u, v = Ut.values, Vt.values
    uxy, vxy = box_average(u, "xy"), box_average(v, "xy")
    uyt, vyt = box_average(u, "yt"), box_average(v, "yt")
    uxt, vxt = box_average(u, "xt"), box_average(v, "xt")
    om_t = _wedge(uxy, vxy, V, PXT)
    om_y = _wedge(uxt, vxt, V, PXY)
    om_x = _wedge(uyt, vyt, PHI, PX) + _wedge(uyt, vyt, V, PXX) + _wedge(uyt, vyt, U, PXXX)
    div = (c * _diff(om_t, "t", g.dt) + _diff(om_y, "y", g.dy) + _diff(om_x, "x", g.dx))
    box_grid = GridSpec(g.x0 + g.dx / 2, g.y0 + g.dy / 2, g.t0 + g.dt / 2, g.dx, g.dy, g.dt,
                        max(g.nx - 1, 2), max(g.ny - 1, 2), max(g.nt - 1, 2))
    if div.shape[-3:] != box_grid.shape:
        return div
    return Field(box_grid, div)


def ten_line_residual(z, grid: GridSpec, params: EquationParams) -> np.ndarray:
    """The ten box equations written out one by one.

    Kept separate from :func:`box_residual_values` so either can check the
    other.  Same sign convention: left side minus right side.
    """
    c = time_scale(params)
    a = params.nonlin_coeff
    sig = params.sigma
    phi, v, u, w, p, px, pxx, pxy, pxt, pxxx = z
    Dx = lambda f: _diff(box_average(f, "yt"), "x", grid.dx)
    Dy = lambda f: _diff(box_average(f, "xt"), "y", grid.dy)
    Dt = lambda f: _diff(box_average(f, "xy"), "t", grid.dt)
    B = lambda f: box_average(f, "xyt")
    return np.stack([
        Dx(px),
        c * Dt(pxt) + Dx(pxx) + Dy(pxy) + B(px),
        Dx(pxxx) - (B(p) + a * B(u) ** 2 - B(pxx)),
        -(sig * B(w) - B(pxy)),
        -(B(u) - B(pxt)),
        -Dx(phi) + B(v),
        -Dx(v) + B(u),
        -Dy(v) + B(w),
        -c * Dt(v) + B(p),
        -Dx(u) - B(pxxx),
    ])
