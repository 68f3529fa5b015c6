"""Numerical lab for Higgs bundles on a flat torus of area 2*pi.

Modules: torus_geometry (grid and twisted derivatives), higgs_core (pairs,
moment map, energy, gradient), flow_engine (gauge-orbit YMH flow),
slice_lab (critical points, negative slice, limit types), scattering
(reverse-flow construction), hecke_lab (Hecke modifications and flow-line
experiments), cli_runner (config-driven runner).
"""
__version__ = "0.1.0"
