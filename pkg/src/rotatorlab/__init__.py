"""Two coupled active rotators on the torus: equilibria, global portraits,
bifurcation diagrams and bursting limit cycles."""
from .model import (REVERSAL, REVERSAL_2, RotatorSystem, case_i, case_ii, harmonic,
                    reversibility_residual, sinusoidal)
from .integrate import SectionSpec, Termination, Trajectory, integrate
from .equilibria import EqClass, Equilibrium, analytic_locus, classify_equilibrium, find_equilibria
from .portrait import (ClassifyConfig, RegionLabel, RegionMap, classify_cell, compute_separatrices,
                       connection_miss, find_connection, region_map)
from .bifurcation import BifCurve, trace_analytic_curves, trace_connection_curve, transform_plane
from .orbits import LimitCycle, find_limit_cycle, max_isi, scan_epsilon

__version__ = "0.1.0"

__all__ = [
    "REVERSAL", "REVERSAL_2", "RotatorSystem", "case_i", "case_ii", "harmonic",
    "reversibility_residual", "sinusoidal", "SectionSpec", "Termination", "Trajectory",
    "integrate", "EqClass", "Equilibrium", "analytic_locus", "classify_equilibrium",
    "find_equilibria", "ClassifyConfig", "RegionLabel", "RegionMap", "classify_cell",
    "compute_separatrices", "connection_miss", "find_connection", "region_map", "BifCurve",
    "trace_analytic_curves", "trace_connection_curve", "transform_plane", "LimitCycle",
    "find_limit_cycle", "max_isi", "scan_epsilon",
]
