"""Geometry of N-anholonomic manifolds: nonlinear connections, canonical
d-connections, curvature d-tensors, Lagrange-induced almost Kahler structures
and a generator for exact off-diagonal vacuum solutions."""

from .expr import Chart, ScalarField, parse, differentiate, simplify, evaluate
from .nconn import NConnection, DVector, h, v
from .dconn import DMetric, DConnection, canonical_dconnection
from .lagrange import Lagrangian, sasaki_metric
from .solutions import AnsatzData, Recipe, SampleWindow, build_solution

__all__ = [
    "Chart",
    "ScalarField",
    "parse",
    "differentiate",
    "simplify",
    "evaluate",
    "NConnection",
    "DVector",
    "h",
    "v",
    "DMetric",
    "DConnection",
    "canonical_dconnection",
    "Lagrangian",
    "sasaki_metric",
    "AnsatzData",
    "Recipe",
    "SampleWindow",
    "build_solution",
]
