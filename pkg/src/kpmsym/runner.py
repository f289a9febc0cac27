"""Batch operations behind the command line: run, verification and refinement."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .core import U, EquationParams, Field, GridSpec
from .diagnostics import (PeakTrackingError, continuous_msym_check, convergence_order,
                          error_norms, family_tangent, mass_integral, peak_track,
                          probe_points, separate_crests, track_velocity)
from .io import (ConfigError, RunConfig, config_entries, ensure_dir, snapshot_name,
                 write_manifest, write_snapshot)
from .preissman import (ConvergenceError, SolverOptions, discrete_msym_residual,
                        scheme_residual, solve_global, solve_tangent)
from .reduced45 import ReducedStepper, ThreeLevelState, startup
from .solutions import (Scenario, adjudicate_lump_power, adjudicate_time_factor,
                        lifted_field)

log = logging.getLogger(__name__)

DISCRETE_TOL = 1e-10
EQUIVALENCE_TOL = 1e-8
CONTINUOUS_MIN_ORDER = 1.5
ORDER_TARGET, ORDER_TOL = 2.0, 0.3
# two-soliton crests are timed over this window, before they start to interact
PRECOLLISION_T = 0.3
CONTINUOUS_STEPS = ((0.1, 1e-2), (0.05, 5e-3), (0.025, 2.5e-3))
# parameter pairs giving independent tangents of each family
TANGENT_PAIRS = {"line_soliton": ("x_offset", "k"), "lump": ("x0", "mu_sq")}


class SolverFailure(RuntimeError):
    def __init__(self, step, exc):
        super().__init__(f"solver failed at step {step}: {exc}")
        self.step = step
        self.residual = getattr(exc, "residual", float("nan"))


@dataclass
class Outcome:
    """Entries for the manifest plus the pass/fail verdict of the operation."""

    entries: dict = field(default_factory=dict)
    ok: bool = True


# --- set-up -------------------------------------------------------------------

def convention_verdicts(cfg: RunConfig):
    entries = {}
    tf_verdict = adjudicate_time_factor(sigma=cfg.sigma)
    entries["verdict.time_factor"] = tf_verdict.selected if tf_verdict.unambiguous else "ambiguous"
    for lab, o in tf_verdict.orders.items():
        entries[f"verdict.time_factor.orders.{lab}"] = o
    if cfg.sigma == -3:
        tf = tf_verdict.selected if tf_verdict.unambiguous else 1
        lv = adjudicate_lump_power(time_factor=tf)
        entries["verdict.lump_denominator_power"] = lv.selected if lv.unambiguous else "ambiguous"
        for lab, o in lv.orders.items():
            entries[f"verdict.lump_denominator_power.orders.{lab}"] = o
    else:
        entries["verdict.lump_denominator_power"] = "n/a"
    if cfg.time_factor == "auto":
        if not tf_verdict.unambiguous:
            raise ConfigError("time_factor=auto but the oracle verdict is ambiguous", "time_factor")
        tf = int(tf_verdict.selected)
    else:
        tf = int(cfg.time_factor)
    entries["time_factor_used"] = tf
    return EquationParams(sigma=cfg.sigma, time_factor=tf), entries


def make_scenario(cfg: RunConfig, eq: EquationParams, t_end=None) -> Scenario:
    x0, x1, y0, y1 = cfg.domain
    return Scenario(cfg.scenario, domain=(x0, x1, y0, y1, cfg.t_end if t_end is None else t_end),
                    eq=eq)


def _opts(cfg: RunConfig, tol=None):
    return SolverOptions(tol_residual=cfg.tol if tol is None else tol, max_iters=cfg.max_iters)


def _center(sc: Scenario):
    x0, _, y0, _, _ = sc.domain
    if sc.kind == "line_soliton":
        return sc.params.x_offset, y0
    if sc.kind == "lump":
        return sc.params.x0, sc.params.y0
    if sc.kind == "two_soliton":
        return sc.params[0].x_offset, y0
    return x0, y0


def small_grid(sc: Scenario, cfg: RunConfig, nx, ny, nt) -> GridSpec:
    """A verification grid with the solver's steps, centred on the wave in x."""
    cx, cy = _center(sc)
    return GridSpec(cx - (nx - 1) / 2 * cfg.dx, cy, 0.0, cfg.dx, cfg.dy, cfg.dt, nx, ny, nt)


# --- time stepping ------------------------------------------------------------

def evolve_reduced(sc: Scenario, grid: GridSpec, opts: SolverOptions, on_level=None):
    """Step the 45-point scheme over the grid; ``on_level(k, u)`` sees every level."""
    stepper = ReducedStepper(grid, sc.eq, opts)
    state = startup(sc, grid, "exact_two_planes", opts)
    if on_level:
        on_level(0, state.u_prev)
        on_level(1, state.u_curr)
    for k in range(2, grid.nt):
        X, Y, T = grid.mesh(k)
        try:
            u = stepper.step(state, sc.u(X, Y, T))
        except (ConvergenceError, np.linalg.LinAlgError) as exc:
            raise SolverFailure(k, exc) from exc
        state = state.advance(u)
        if on_level:
            on_level(k, u)
    return state.u_curr


def evolve_preissman(sc: Scenario, grid: GridSpec, opts: SolverOptions, on_level=None):
    z = lifted_field(sc, grid)
    try:
        sol = solve_global(z[:, 0], z, grid, sc.eq, opts)
    except (ConvergenceError, np.linalg.LinAlgError) as exc:
        raise SolverFailure(getattr(exc, "slab", -1), exc) from exc
    if on_level:
        for k in range(grid.nt):
            on_level(k, sol.field.values[U, k])
    return sol.field.values[U, -1]


def _track(sc: Scenario, u, grid: GridSpec, prefix):
    out = {}
    try:
        if sc.kind == "line_soliton":
            c = peak_track(u, grid, "crest_line")
            out.update({f"{prefix}.crest_x_intercept": c.x_intercept,
                        f"{prefix}.crest_slope": c.slope, f"{prefix}.crest_amplitude": c.amplitude})
        elif sc.kind == "lump":
            p = peak_track(u, grid, "point_peak")
            out.update({f"{prefix}.peak_x": p.x, f"{prefix}.peak_y": p.y,
                        f"{prefix}.peak_amplitude": p.amplitude})
        elif sc.kind == "two_soliton":
            for n, c in enumerate(separate_crests(u, grid), start=1):
                out.update({f"{prefix}.crest{n}_x_intercept": c.x_intercept,
                            f"{prefix}.crest{n}_amplitude": c.amplitude})
    except PeakTrackingError as exc:
        out[f"{prefix}.tracking"] = f"unavailable ({exc})"
    return out


def run(cfg: RunConfig, out_dir=None) -> Outcome:
    """Full simulation with snapshots and a manifest in ``out_dir``."""
    t0 = time.perf_counter()
    if cfg.scenario == "manufactured":
        raise ConfigError("the manufactured scenario has no boundary data to run with", "scenario")
    out_dir = ensure_dir(out_dir or cfg.out_dir)
    eq, entries = convention_verdicts(cfg)
    sc = make_scenario(cfg, eq)
    grid = cfg.grid()
    entries = {"operation": "run", **config_entries(cfg), **entries,
               "grid.nx": grid.nx, "grid.ny": grid.ny, "grid.nt": grid.nt}
    mass0 = []
    pre = {"t": [], "x": []}
    last = {}

    def on_level(k, u):
        t = grid.t[k]
        if sc.kind == "two_soliton" and t <= PRECOLLISION_T + 1e-12:
            try:
                crests = separate_crests(u, grid)
                pre["t"].append(t)
                pre["x"].append([c.x_intercept for c in crests])
            except PeakTrackingError:
                pass
        if k % cfg.snapshot_every and k != grid.nt - 1:
            return
        write_snapshot(os.path.join(out_dir, snapshot_name(k)), u, grid)
        key = f"snapshot.k{k:06}"
        m = mass_integral(u, grid)
        if not mass0:
            mass0.append(m)
        snap = {f"{key}.t": t, f"{key}.mass": m}
        if sc.has_exact_solution:
            l2, linf = error_norms(u, sc, grid, k)
            snap.update({f"{key}.l2": l2, f"{key}.linf": linf})
        snap.update(_track(sc, u, grid, key))
        entries.update(snap)
        last.clear()
        last.update({k_.replace(key, "final"): v for k_, v in snap.items()})
        log.info("level %d t=%.4g mass=%.6g", k, t, m)

    evolve = evolve_reduced if cfg.scheme == "reduced45" else evolve_preissman
    evolve(sc, grid, _opts(cfg), on_level)
    entries.update(last)
    entries["mass.initial"] = mass0[0]
    entries["mass.relative_drift"] = (abs(last["final.mass"] - mass0[0]) / abs(mass0[0])
                                      if mass0[0] else float("nan"))
    if sc.kind == "two_soliton":
        xs = np.array(pre["x"])
        for n in range(xs.shape[1] if xs.size else 0):
            entries[f"two_soliton.precollision_velocity{n + 1}"] = track_velocity(pre["t"], xs[:, n])
    entries["wall_clock_s"] = time.perf_counter() - t0
    entries["version"] = __version__
    write_manifest(os.path.join(out_dir, "manifest.txt"), entries)
    return Outcome(entries, True)


# --- verification -------------------------------------------------------------

def _random_tangent(base: Field, rng, params):
    g = base.grid
    init = rng.standard_normal((10, g.ny, g.nx))
    bnd = rng.standard_normal((10, g.nt, g.ny, g.nx))
    return solve_tangent(base, init, bnd, params)


def verify_conservation(cfg: RunConfig, out_dir=None, pairs=5, perturb=0.0) -> Outcome:
    """Discrete law on solved tangent pairs plus the continuous law on family tangents.

    ``perturb`` adds seeded noise of that relative size to each solved
    tangent before the check, as a negative control.
    """
    t0 = time.perf_counter()
    eq, entries = convention_verdicts(cfg)
    sc = make_scenario(cfg, eq)
    grid = small_grid(sc, cfg, 8, 4, 4)
    opts = _opts(cfg)
    z = lifted_field(sc, grid)
    try:
        base = solve_global(z[:, 0], z, grid, eq, opts).field
    except (ConvergenceError, np.linalg.LinAlgError) as exc:
        raise SolverFailure(0, exc) from exc
    base_res = scheme_residual(base, eq).max_abs
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for n in range(pairs):
        a = _random_tangent(base, rng, eq)
        b = _random_tangent(base, rng, eq)
        if perturb:
            a = Field(grid, a.values * (1 + perturb * rng.standard_normal(a.values.shape)))
        res = np.abs(discrete_msym_residual(a, b, eq).values).max()
        rel = res / (np.abs(a.values).max() * np.abs(b.values).max())
        entries[f"discrete.pair{n + 1}.relative_residual"] = rel
        worst = max(worst, rel)
    same = np.abs(discrete_msym_residual(a, a, eq).values).max()
    entries.update({"operation": "verify-conservation", **config_entries(cfg),
                    "base.max_residual": base_res, "discrete.max_relative_residual": worst,
                    "discrete.identical_pair_residual": same})
    ok = base_res <= DISCRETE_TOL and worst <= DISCRETE_TOL and same == 0.0
    if sc.kind in TANGENT_PAIRS:
        pa, pb = TANGENT_PAIRS[sc.kind]
        cx, cy = _center(sc)
        pts = probe_points((cx, cy if sc.kind == "lump" else 0.0, 0.0))
        res = []
        for h, eps in CONTINUOUS_STEPS:
            ta = family_tangent(sc, eps, **{pa: 1.0})
            tb = family_tangent(sc, eps, **{pb: 1.0})
            res.append(continuous_msym_check(sc, ta, tb, pts, h))
        orders = [convergence_order(res[i], res[i + 1]) for i in range(len(res) - 1)]
        ta = family_tangent(sc, CONTINUOUS_STEPS[-1][1], **{pa: 1.0})
        ident = continuous_msym_check(sc, ta, ta, pts, CONTINUOUS_STEPS[-1][0])
        entries.update({"continuous.residuals": res, "continuous.orders": orders,
                        "continuous.identical_pair_residual": ident})
        ok = ok and min(orders) >= CONTINUOUS_MIN_ORDER and ident == 0.0
    else:
        entries["continuous.residuals"] = "n/a"
    entries.update({"passed": ok, "wall_clock_s": time.perf_counter() - t0, "version": __version__})
    if out_dir or cfg.out_dir:
        write_manifest(os.path.join(ensure_dir(out_dir or cfg.out_dir), "manifest.txt"), entries)
    return Outcome(entries, ok)


def verify_equivalence(cfg: RunConfig, out_dir=None, nx=12, ny=6, steps=3,
                       mismatch=0.0) -> Outcome:
    """Both schemes from identical data; max difference of u.

    The 45-point run starts from u^0 and the box scheme's u^1.  ``mismatch``
    shifts its boundary data, as a negative control.
    """
    t0 = time.perf_counter()
    eq, entries = convention_verdicts(cfg)
    sc = make_scenario(cfg, eq)
    grid = small_grid(sc, cfg, nx, ny, steps + 1)
    z = lifted_field(sc, grid)
    try:
        full = solve_global(z[:, 0], z, grid, eq, _opts(cfg)).field.values[U]
        stepper = ReducedStepper(grid, eq, _opts(cfg, tol=cfg.tol * 1e-3))
        state = ThreeLevelState(full[0], full[1])
        diff = 0.0
        for k in range(2, grid.nt):
            u = stepper.step(state, z[U, k] + mismatch)
            diff = max(diff, float(np.abs(u - full[k]).max()))
            state = state.advance(u)
    except (ConvergenceError, np.linalg.LinAlgError) as exc:
        raise SolverFailure(-1, exc) from exc
    ok = diff <= EQUIVALENCE_TOL
    entries.update({"operation": "verify-equivalence", **config_entries(cfg),
                    "equivalence.grid": (grid.nx, grid.ny, grid.nt),
                    "equivalence.max_abs_difference": diff, "passed": ok,
                    "wall_clock_s": time.perf_counter() - t0, "version": __version__})
    if out_dir or cfg.out_dir:
        write_manifest(os.path.join(ensure_dir(out_dir or cfg.out_dir), "manifest.txt"), entries)
    return Outcome(entries, ok)


def convergence_study(cfg: RunConfig, levels=3, out_dir=None, solver=None) -> Outcome:
    """Errors at ``t_end`` under simultaneous halving of dx, dy, dt.

    ``solver(scenario, grid, opts)`` returns the final u plane; the default
    is the configured scheme.  Orders that cannot be formed (an error of
    zero) are reported as NaN.
    """
    if levels < 2:
        raise ConfigError("a convergence study needs at least 2 levels", "levels")
    t0 = time.perf_counter()
    eq, entries = convention_verdicts(cfg)
    sc = make_scenario(cfg, eq)
    if not sc.has_exact_solution:
        raise ConfigError("convergence needs a scenario with an exact solution", "scenario")
    if solver is None:
        evolve = evolve_reduced if cfg.scheme == "reduced45" else evolve_preissman
        solver = lambda s, g, o: evolve(s, g, o)
    l2s, linfs = [], []
    for lvl in range(levels):
        c = replace(cfg, dx=cfg.dx / 2 ** lvl, dy=cfg.dy / 2 ** lvl, dt=cfg.dt / 2 ** lvl)
        g = c.grid()
        u = solver(sc, g, _opts(c))
        l2, linf = error_norms(u, sc, g, g.nt - 1)
        l2s.append(l2)
        linfs.append(linf)
        entries[f"level{lvl}.dx"] = c.dx
        entries[f"level{lvl}.l2"] = l2
        entries[f"level{lvl}.linf"] = linf

    def orders(es):
        out = []
        for a, b in zip(es[:-1], es[1:]):
            try:
                out.append(convergence_order(a, b))
            except ValueError:
                out.append(float("nan"))
        return out

    o2, oinf = orders(l2s), orders(linfs)
    ok = all(abs(o - ORDER_TARGET) <= ORDER_TOL for o in o2 + oinf)
    entries.update({"operation": "convergence", **config_entries(cfg), "levels": levels,
                    "orders.l2": o2, "orders.linf": oinf, "passed": ok,
                    "wall_clock_s": time.perf_counter() - t0, "version": __version__})
    if out_dir or cfg.out_dir:
        write_manifest(os.path.join(ensure_dir(out_dir or cfg.out_dir), "manifest.txt"), entries)
    return Outcome(entries, ok)
