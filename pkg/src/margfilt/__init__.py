"""Marginalized Gaussian filtering over dynamic state-space subspaces.

The filtering recursion is reduced to low-dimensional marginal moment
integrals of the active subspace; four nested model levels (general,
additive-noise, conditionally linear-Gaussian, affine-Gaussian) trade model
structure against integration dimensionality, and pluggable rules
(Gauss-Hermite, sigma points, seeded Monte Carlo, caller-supplied samples)
evaluate whatever integrals remain.
"""

from . import errors
from .compose import (
    BindingEntry,
    BoundSubmodel,
    StateLayout,
    SubmodelBinding,
    UnitTable,
    build_projection,
    complement_basis,
    compose_system,
    default_units,
)
from .engine import (
    BoundModel,
    StepConfig,
    StepFlags,
    StepReport,
    assemble_prediction,
    assemble_update,
    step,
)
from .gaussian import (
    ConditionalGaussian,
    GaussianBelief,
    SubspaceSplit,
    condition_on_sub,
    inactive_gain,
    make_split,
)
from .models import (
    OutputModelA,
    OutputModelB,
    OutputModelC,
    OutputModelD,
    TransitionModelA,
    TransitionModelB,
    TransitionModelC,
    TransitionModelD,
    central_jacobian,
    default_lin_point,
    lower_to_b,
    lower_to_c,
    lower_to_d,
)
from .moments import (
    PredictionMoments,
    UpdateMoments,
    predict_a,
    predict_b,
    predict_c,
    predict_d,
    update_a_kde,
    update_b,
    update_c,
    update_d,
    update_likelihood,
    update_parametric,
)
from .quadrature import (
    GaussHermiteRule,
    IntegrationRule,
    KernelConfig,
    MonteCarloRule,
    UnscentedRule,
    WeightedSampleSet,
    estimate,
    kde_likelihood_at,
    nodes_for,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "BindingEntry",
    "BoundSubmodel",
    "StateLayout",
    "SubmodelBinding",
    "UnitTable",
    "build_projection",
    "complement_basis",
    "compose_system",
    "default_units",
    "BoundModel",
    "StepConfig",
    "StepFlags",
    "StepReport",
    "assemble_prediction",
    "assemble_update",
    "step",
    "ConditionalGaussian",
    "GaussianBelief",
    "SubspaceSplit",
    "condition_on_sub",
    "inactive_gain",
    "make_split",
    "OutputModelA",
    "OutputModelB",
    "OutputModelC",
    "OutputModelD",
    "TransitionModelA",
    "TransitionModelB",
    "TransitionModelC",
    "TransitionModelD",
    "central_jacobian",
    "default_lin_point",
    "lower_to_b",
    "lower_to_c",
    "lower_to_d",
    "PredictionMoments",
    "UpdateMoments",
    "predict_a",
    "predict_b",
    "predict_c",
    "predict_d",
    "update_a_kde",
    "update_b",
    "update_c",
    "update_d",
    "update_likelihood",
    "update_parametric",
    "GaussHermiteRule",
    "IntegrationRule",
    "KernelConfig",
    "MonteCarloRule",
    "UnscentedRule",
    "WeightedSampleSet",
    "estimate",
    "kde_likelihood_at",
    "nodes_for",
]
