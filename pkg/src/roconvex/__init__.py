"""Pointwise rank-one convexification of nonconvex energy densities.

The package computes approximations of the rank-one convex envelope by
hierarchical lamination: repeated one-dimensional convexifications along a
discrete set of rank-one directions build a binary laminate tree whose
leaves realize the relaxed value, the relaxed stresses and tangent moduli,
and a reconstructible microstructure.
"""

from roconvex.backend import BACKEND, available_backends
from roconvex.directions import (ConvexifyParams, DirectionSet,
                                 build_direction_set, scale_direction)
from roconvex.energies import (DamageParams, DamagePotential, DamageState,
                               EnergyDensity, InadmissibleDeformation,
                               KSDEnergy, MultiwellEnergy, NeoHookean1,
                               NeoHookean2, RingWellEnergy, condensed_update,
                               damage_D, damage_Dbar, make_energy,
                               model_names)
from roconvex.engine import (DirectionMemory, RelaxResult, find_best_split,
                             relax, rotational_average)
from roconvex.hull import Hull1D, convexify, envelope_at
from roconvex.microstructure import (coefficient, leaf_assignment,
                                     phase_fractions, project)
from roconvex.tree import (LaminateNode, check_hm, derivatives, evaluate,
                           leaves, to_json, from_json, validate_tree)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "available_backends",
    "ConvexifyParams", "DirectionSet", "build_direction_set",
    "scale_direction",
    "DamageParams", "DamagePotential", "DamageState", "EnergyDensity",
    "InadmissibleDeformation", "KSDEnergy", "MultiwellEnergy", "NeoHookean1",
    "NeoHookean2", "RingWellEnergy", "condensed_update", "damage_D",
    "damage_Dbar", "make_energy", "model_names",
    "DirectionMemory", "RelaxResult", "find_best_split", "relax",
    "rotational_average",
    "Hull1D", "convexify", "envelope_at",
    "coefficient", "leaf_assignment", "phase_fractions", "project",
    "LaminateNode", "check_hm", "derivatives", "evaluate", "leaves",
    "to_json", "from_json", "validate_tree",
    "__version__",
]
