"""The discrete multisymplectic law on a small box-scheme solve.

Two random tangent solutions about a solved line soliton satisfy the
per-box law to rounding; an unsolved field in the second slot does not.

Run:  python demos/02_conservation.py
"""
import numpy as np

from kpmsym.core import NCOMP, EquationParams, Field, GridSpec
from kpmsym.preissman import discrete_msym_residual, solve_global, solve_tangent
from kpmsym.solutions import Scenario, lifted_field

eq = EquationParams()
sc = Scenario("line_soliton")
grid = GridSpec(6.0 - 0.7, 0.0, 0.0, 0.2, 0.1, 0.01, 8, 4, 4)
z = lifted_field(sc, grid)
sol = solve_global(z[:, 0], z, grid, eq)
print(f"base solve: max box residual {sol.max_residual:.2e}, newton iterations {sol.iterations}")

rng = np.random.default_rng(1)


def tangent():
    init = rng.standard_normal((NCOMP, grid.ny, grid.nx))
    bnd = rng.standard_normal((NCOMP,) + grid.shape)
    return solve_tangent(sol.field, init, bnd, eq)


a, b = tangent(), tangent()
scale = np.abs(a.values).max() * np.abs(b.values).max()
res = np.abs(discrete_msym_residual(a, b, eq).values).max()
print(f"solved pair:      relative residual {res / scale:.2e}")
print(f"identical pair:   residual {np.abs(discrete_msym_residual(a, a, eq).values).max()}")

junk = Field(grid, rng.standard_normal((NCOMP,) + grid.shape))
res = np.abs(discrete_msym_residual(a, junk, eq).values).max()
print(f"unsolved partner: relative residual "
      f"{res / (np.abs(a.values).max() * np.abs(junk.values).max()):.2e}")
