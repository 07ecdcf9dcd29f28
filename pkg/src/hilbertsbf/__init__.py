"""Smooth backfitting additive regression for Hilbert-space-valued responses.

Submodules:

* :mod:`hilbertsbf.spaces` -- Hilbert geometries and element arithmetic
* :mod:`hilbertsbf.sphere` -- embedded sphere maps, intrinsic means, tangent fields
* :mod:`hilbertsbf.kernels` -- domains, quadrature grids, normalized kernels
* :mod:`hilbertsbf.backfit` -- design densities and the backfitting solver
* :mod:`hilbertsbf.scores` -- PC / singular-component score extraction
* :mod:`hilbertsbf.densrec` -- density reconstruction from raw samples
* :mod:`hilbertsbf.bandwidth` -- coordinate-wise bandwidth selection
* :mod:`hilbertsbf.simulate` -- benchmark generators and Monte-Carlo studies
* :mod:`hilbertsbf.report` -- delimited outputs and figures
* :mod:`hilbertsbf.cli` -- command-line interface
"""

from .kernels import Domain, GridSpec, biweight, kernel_matrix, normalized_kernel
from .spaces import (
    BayesHilbertSpace,
    EuclideanSpace,
    HilbertElement,
    L2GridSpace,
    SimplexSpace,
    add,
    clr,
    clr_inv,
    combine,
    distance,
    inner,
    mean,
    norm,
    scale,
    space_from_json,
    subtract,
    zero,
)
from .backfit import RegressionData, SbfFit, estimate_densities, evaluate_component, fit, predict
from .bandwidth import CbsConfig, cbs_select, default_grid
from .densrec import SampleSet, SphereGeometry, cv_bandwidth, reconstruct_box, reconstruct_sphere
from .scores import ScoreModel, hpca, hsca, irfpc, irsc
from .simulate import MetricReport, Sim1Config, Sim2Config, run_study

__version__ = "0.1.0"

__all__ = [
    "BayesHilbertSpace",
    "CbsConfig",
    "Domain",
    "EuclideanSpace",
    "GridSpec",
    "HilbertElement",
    "L2GridSpace",
    "MetricReport",
    "RegressionData",
    "SampleSet",
    "SbfFit",
    "ScoreModel",
    "Sim1Config",
    "Sim2Config",
    "SimplexSpace",
    "SphereGeometry",
    "add",
    "biweight",
    "cbs_select",
    "clr",
    "clr_inv",
    "combine",
    "cv_bandwidth",
    "default_grid",
    "distance",
    "estimate_densities",
    "evaluate_component",
    "fit",
    "hpca",
    "hsca",
    "inner",
    "irfpc",
    "irsc",
    "kernel_matrix",
    "mean",
    "norm",
    "normalized_kernel",
    "predict",
    "reconstruct_box",
    "reconstruct_sphere",
    "run_study",
    "scale",
    "space_from_json",
    "subtract",
    "zero",
]
