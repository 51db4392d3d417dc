"""Discrete conformal de Rham complex: forms, capacities, pullbacks and cohomology probes."""
from .capacity import (Condenser, CapacityResult, ExhaustionSpec, classify_type, solve_condenser)
from .catalog import ModelSpaceSpec, build_model_space, list_catalog
from .cohomology import (cohomology_ranks, integrate_top, minimal_primitive, sobolev_constant)
from .complex import MetricField, SimplicialComplex, refine
from .forms import Cochain, SampledForm, coboundary, conformal_norm, whitney_lift
from .pullback import catalog_map, distortion_coefficient, pullback_form, sample_map

__all__ = [
    "Condenser", "CapacityResult", "ExhaustionSpec", "classify_type", "solve_condenser",
    "ModelSpaceSpec", "build_model_space", "list_catalog",
    "cohomology_ranks", "integrate_top", "minimal_primitive", "sobolev_constant",
    "MetricField", "SimplicialComplex", "refine",
    "Cochain", "SampledForm", "coboundary", "conformal_norm", "whitney_lift",
    "catalog_map", "distortion_coefficient", "pullback_form", "sample_map",
]
