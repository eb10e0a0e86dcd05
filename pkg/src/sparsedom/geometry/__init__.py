"""Graded vector fields, curve families and Carnot–Carathéodory geometry."""
from .cc import cc_distance, lattice_cc_matrix, reachable
from .curves import (CurveFamily, CurvatureWitness, curvature_cj_check, expand_taylor_fields,
                     model_curve, taylor_remainder)
from .fields import Box, GradedFieldSystem, VectorField, flow, lie_bracket
from .lie import generate_graded_system, hormander_type
from .models import model_system
from .polynomial import Polynomial
from .scaling import ScalingMap, build_scaling_map, volume_proxy

__all__ = [
    "Box", "CurveFamily", "CurvatureWitness", "GradedFieldSystem", "Polynomial", "ScalingMap",
    "VectorField", "build_scaling_map", "cc_distance", "curvature_cj_check", "expand_taylor_fields",
    "flow", "generate_graded_system", "hormander_type", "lattice_cc_matrix", "lie_bracket",
    "model_curve", "model_system", "reachable", "taylor_remainder", "volume_proxy",
]
