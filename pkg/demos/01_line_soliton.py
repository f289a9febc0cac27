"""Follow a line soliton with the 45-point scheme and compare with the exact crest.

Run:  python demos/01_line_soliton.py [t_end]
"""
import sys

import numpy as np

from kpmsym.core import EquationParams
from kpmsym.diagnostics import error_norms, peak_track
from kpmsym.preissman import SolverOptions
from kpmsym.reduced45 import ReducedStepper, startup
from kpmsym.solutions import Scenario

t_end = float(sys.argv[1]) if len(sys.argv) > 1 else 2.0
eq = EquationParams()
sc = Scenario("line_soliton", domain=(0, 40, 0, 2, t_end), eq=eq)
grid = sc.grid(0.2, 0.1, 0.01)
v = sc.params.velocity(eq)
print(f"grid {grid.nx}x{grid.ny}, {grid.nt - 1} steps; exact crest speed {v}")

stepper = ReducedStepper(grid, eq, SolverOptions())
state = startup(sc, grid)
every = int(round(0.5 / grid.dt))
print(f"{'t':>6} {'crest x':>9} {'exact':>7} {'amp':>6} {'linf err':>9} {'newton':>6}")
for k in range(2, grid.nt):
    X, Y, T = grid.mesh(k)
    u = stepper.step(state, sc.u(X, Y, T))
    state = state.advance(u)
    if k % every == 0 or k == grid.nt - 1:
        c = peak_track(u, grid, "crest_line")
        _, linf = error_norms(u, sc, grid, k)
        t = grid.t[k]
        print(f"{t:6.2f} {c.x_intercept:9.3f} {6 + v * t:7.3f} {c.amplitude:6.3f} "
              f"{linf:9.2e} {stepper.last_iterations:6d}")

# amplitude loss is the scheme's dispersion error; it shrinks like h^2
print("final max |u|:", float(np.abs(state.u_curr).max()))
