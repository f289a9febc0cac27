"""Multisymplectic discretisations of the KPI equation.

Modules: :mod:`core` (state, operators, grids), :mod:`solutions` (closed
forms and the convention oracle), :mod:`preissman` (ten-component box
scheme), :mod:`reduced45` (45-point scheme in u), :mod:`diagnostics`,
:mod:`io` and :mod:`runner` (batch operations behind the CLI).
"""
__version__ = "0.1.0"
