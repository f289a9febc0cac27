"""Equation conventions, the ten-component state and the Bridges-form operators.

The state vector ``Z`` is ordered as

    0 phi, 1 v, 2 u, 3 w, 4 p, 5 px, 6 pxx, 7 pxy, 8 pxt, 9 pxxx

with ``v = phi_x``, ``u = phi_xx``, ``w = phi_xy`` and ``p`` the x-t mixed
derivative (scaled, see :func:`time_scale`).  Arrays carrying a full state
always put the component axis first, so ``z[U]`` is the u-field of any
state or state field.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple

import numpy as np

COMPONENTS = ("phi", "v", "u", "w", "p", "px", "pxx", "pxy", "pxt", "pxxx")
PHI, V, U, W, P, PX, PXX, PXY, PXT, PXXX = range(10)
NCOMP = 10

# partial derivatives of the potential consumed by the Legendre lift
POTENTIAL_DERIVS = ("phi", "x", "xx", "xxx", "xxxx", "xxxxx", "xy", "xyy", "xt", "xxt")


@dataclass(frozen=True)
class EquationParams:
    """Coefficients of ``(tf*u_t + (c*u**2)_x + u_xxx)_x + sigma*u_yy = 0``.

    ``sigma=-3`` is KPI.  ``time_factor`` is the coefficient on ``u_t``; the
    closed-form solutions in :mod:`kpmsym.solutions` satisfy the equation
    with ``time_factor=1``, which is therefore the default.
    """

    sigma: float = -3.0
    time_factor: float = 1.0
    nonlin_coeff: float = 3.0

    def __post_init__(self):
        if self.sigma == 0:
            raise ValueError("sigma must be nonzero")
        if not self.nonlin_coeff > 0:
            raise ValueError("nonlin_coeff must be positive")
        if self.time_factor not in (1, 2):
            raise ValueError("time_factor must be 1 or 2")


def time_scale(params: EquationParams) -> float:
    """Weight multiplying ``M`` in ``M Z_t + K Z_x + L Z_y = grad S``.

    The printed matrices give the ``2 u_t`` form; scaling ``M`` by
    ``time_factor / 2`` (a rescaling of time) yields the general one.
    """
    return params.time_factor / 2.0


class MsymOperators(NamedTuple):
    M: np.ndarray
    K: np.ndarray
    L: np.ndarray


def build_matrices() -> MsymOperators:
    """The constant skew-symmetric structure matrices (0-based indices)."""
    M = np.zeros((NCOMP, NCOMP))
    K = np.zeros((NCOMP, NCOMP))
    L = np.zeros((NCOMP, NCOMP))
    M[V, PXT], M[PXT, V] = 1.0, -1.0
    for a, b in ((PHI, PX), (V, PXX), (U, PXXX)):
        K[a, b], K[b, a] = 1.0, -1.0
    L[V, PXY], L[PXY, V] = 1.0, -1.0
    return MsymOperators(M, K, L)


def make_state(**components) -> np.ndarray:
    """Build a state vector from named components, the rest zero."""
    z = np.zeros(NCOMP)
    for name, value in components.items():
        z[COMPONENTS.index(name)] = value
    return z


def hamiltonian_S(z, params: EquationParams):
    """``S(Z)``; ``z`` has the component axis first and may carry more axes."""
    z = np.asarray(z, dtype=float)
    u = z[U]
    return (u * z[P] + 0.5 * z[PXXX] ** 2 + 0.5 * params.sigma * z[W] ** 2
            + params.nonlin_coeff / 3.0 * u ** 3
            - z[PX] * z[V] - z[PXX] * u - z[PXT] * z[P] - z[PXY] * z[W])


def grad_S(z, params: EquationParams) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    g = np.zeros_like(z)
    g[V] = -z[PX]
    g[U] = z[P] + params.nonlin_coeff * z[U] ** 2 - z[PXX]
    g[W] = params.sigma * z[W] - z[PXY]
    g[P] = z[U] - z[PXT]
    g[PX] = -z[V]
    g[PXX] = -z[U]
    g[PXY] = -z[W]
    g[PXT] = -z[P]
    g[PXXX] = z[PXXX]
    return g


def hess_S(u, params: EquationParams) -> np.ndarray:
    """Hessian of ``S``; only the (u, u) entry depends on the state.

    ``u`` may be an array, in which case the result has shape
    ``(10, 10) + u.shape``.
    """
    u = np.asarray(u, dtype=float)
    H = np.zeros((NCOMP, NCOMP) + u.shape)
    for a, b, val in ((V, PX, -1.0), (U, P, 1.0), (U, PXX, -1.0), (W, PXY, -1.0),
                      (P, PXT, -1.0)):
        H[a, b] = H[b, a] = val
    H[W, W] = params.sigma
    H[PXXX, PXXX] = 1.0
    H[U, U] = 2.0 * params.nonlin_coeff * u
    return H


def lift_values(d: Mapping[str, np.ndarray], params: EquationParams) -> np.ndarray:
    """Covariant Legendre lift of potential derivatives ``d`` to ``Z``."""
    c = time_scale(params)
    a = params.nonlin_coeff
    shape = np.shape(d["phi"])
    z = np.zeros((NCOMP,) + shape)
    z[PHI] = d["phi"]
    z[V] = d["x"]
    z[U] = d["xx"]
    z[W] = d["xy"]
    z[P] = c * d["xt"]
    z[PX] = -(2 * c * d["xxt"] + 2 * a * d["xx"] * d["xxx"]
              + params.sigma * d["xyy"] + d["xxxxx"])
    z[PXX] = c * d["xt"] + a * d["xx"] ** 2 + d["xxxx"]
    z[PXY] = params.sigma * d["xy"]
    z[PXT] = d["xx"]
    z[PXXX] = -d["xxx"]
    return z


def lift_from_potential(sampler: Callable, params: EquationParams) -> Callable:
    """Wrap a potential-derivative sampler into a state sampler.

    ``sampler(x, y, t)`` returns a mapping with the keys in
    :data:`POTENTIAL_DERIVS`.  Errors raised by the sampler propagate.
    """
    def zsampler(x, y, t):
        return lift_values(sampler(x, y, t), params)
    return zsampler


# central difference weights (offset -> weight) for h-scaled derivatives
_FD = {
    1: ({-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}, 1),
    2: ({-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}, 2),
    3: ({-3: 1 / 8, -2: -1, -1: 13 / 8, 1: -13 / 8, 2: 1, 3: -1 / 8}, 3),
    4: ({-3: -1 / 6, -2: 2, -1: -13 / 2, 0: 28 / 3, 1: -13 / 2, 2: 2, 3: -1 / 6}, 4),
    5: ({-4: 1 / 6, -3: -3 / 2, -2: 13 / 3, -1: -29 / 6, 1: 29 / 6, 2: -13 / 3,
         3: 3 / 2, 4: -1 / 6}, 5),
}


def fd_potential_sampler(phi: Callable, h: float = 1e-2) -> Callable:
    """Potential-derivative sampler built from fourth-order central differences.

    Each derivative along one axis uses the O(h^4) stencils in ``_FD``;
    mixed derivatives are nested.  ``h=1e-2`` keeps the fifth derivative's
    rounding error near 1e-6 for unit-scale potentials.
    """
    def deriv(f, order, axis):
        weights, p = _FD[order]

        def g(x, y, t):
            acc = 0.0
            for off, wgt in weights.items():
                s = off * h
                args = [x, y, t]
                args[axis] = args[axis] + s
                acc = acc + wgt * f(*args)
            return acc / h ** p
        return g

    fx = {n: deriv(phi, n, 0) for n in range(1, 6)}
    fxy = deriv(fx[1], 1, 1)
    fxyy = deriv(fx[1], 2, 1)
    fxt = deriv(fx[1], 1, 2)
    fxxt = deriv(fx[2], 1, 2)

    def sampler(x, y, t):
        return {
            "phi": phi(x, y, t), "x": fx[1](x, y, t), "xx": fx[2](x, y, t),
            "xxx": fx[3](x, y, t), "xxxx": fx[4](x, y, t), "xxxxx": fx[5](x, y, t),
            "xy": fxy(x, y, t), "xyy": fxyy(x, y, t), "xt": fxt(x, y, t),
            "xxt": fxxt(x, y, t),
        }
    return sampler


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time grid with nodes ``x0 + i*dx`` etc.

    Operations that need wider stencils check their own minimum sizes; the
    grid itself only requires two nodes per axis.
    """

    x0: float
    y0: float
    t0: float
    dx: float
    dy: float
    dt: float
    nx: int
    ny: int
    nt: int

    def __post_init__(self):
        for name in ("dx", "dy", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("nx", "ny", "nt"):
            if int(getattr(self, name)) < 2:
                raise ValueError(f"{name} must be at least 2")

    @classmethod
    def from_domain(cls, x_range, y_range, t_end, dx, dy, dt, t0=0.0):
        """Grid covering ``[x0,x1] x [y0,y1] x [t0,t_end]`` (steps must divide)."""
        def count(lo, hi, h, name):
            n = (hi - lo) / h
            if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
                raise ValueError(f"{name} step does not divide the interval")
            return int(round(n)) + 1
        return cls(x_range[0], y_range[0], t0, dx, dy, dt,
                   count(*x_range, dx, "x"), count(*y_range, dy, "y"),
                   count(t0, t_end, dt, "t"))

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.dy * np.arange(self.ny)

    @property
    def t(self):
        return self.t0 + self.dt * np.arange(self.nt)

    @property
    def shape(self):
        """Array shape of one scalar field: ``(nt, ny, nx)``."""
        return (self.nt, self.ny, self.nx)

    def mesh(self, k=None):
        """Coordinate arrays ``(X, Y, T)`` for the whole grid or one time level."""
        if k is None:
            T, Y, X = np.meshgrid(self.t, self.y, self.x, indexing="ij")
            return X, Y, T
        Y, X = np.meshgrid(self.y, self.x, indexing="ij")
        return X, Y, np.full_like(X, self.t[k])

    def with_nt(self, nt):
        return GridSpec(self.x0, self.y0, self.t0, self.dx, self.dy, self.dt,
                        self.nx, self.ny, nt)


@dataclass
class Field:
    """Scalar or state field sampled on a grid.

    ``values`` has shape ``(ncomp, nt, ny, nx)``; flattening in C order puts
    x fastest, then y, then t, then the component.  ``mask`` optionally flags
    the points where the values are meaningful (e.g. residual interiors).
    """

    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 3:
            self.values = self.values[None]
        g = self.grid
        if self.values.ndim != 4 or self.values.shape[1:] != g.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {g.shape}")
        if self.values.shape[0] not in (1, NCOMP):
            raise ValueError("component count must be 1 or 10")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def component_count(self):
        return self.values.shape[0]

    def flat(self):
        return self.values.reshape(-1)

    @classmethod
    def from_flat(cls, grid, data, component_count):
        data = np.asarray(data, dtype=float)
        if data.size != component_count * grid.nx * grid.ny * grid.nt:
            raise ValueError("flat data length does not match grid")
        return cls(grid, data.reshape((component_count,) + grid.shape))

    @classmethod
    def sample(cls, grid, zsampler):
        """Evaluate a state (or scalar) sampler at every grid node."""
        X, Y, T = grid.mesh()
        return cls(grid, zsampler(X, Y, T))


def _centered(f, axis, h):
    return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)


def continuous_residual(zfield: Field, params: EquationParams) -> Field:
    """Pointwise ``c M Z_t + K Z_x + L Z_y - grad S(Z)`` by centered differences.

    Only nodes with a neighbour on each side in every direction get a value;
    the remaining ones are zero and flagged ``False`` in ``mask``.
    """
    g = zfield.grid
    if zfield.component_count != NCOMP:
        raise ValueError("continuous_residual needs a 10-component field")
    if min(g.nx, g.ny, g.nt) < 3:
        raise ValueError("grid too small for centered differences")
    M, K, L = build_matrices()
    z = zfield.values
    zt = _centered(z, 1, g.dt)
    zy = _centered(z, 2, g.dy)
    zx = _centered(z, 3, g.dx)
    res = (time_scale(params) * np.einsum("ab,b...->a...", M, zt)
           + np.einsum("ab,b...->a...", K, zx)
           + np.einsum("ab,b...->a...", L, zy) - grad_S(z, params))
    mask = np.zeros(g.shape, bool)
    mask[1:-1, 1:-1, 1:-1] = True
    res = np.where(mask, res, 0.0)
    return Field(g, res, mask=mask)
