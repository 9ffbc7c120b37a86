"""Finite, continuum and distributed-parameter neural networks with the maps between them.

Modules, bottom-up: ``numerics`` (grids, quadrature, solvers, BV helpers),
``funcrep`` (function representations, activations, matrix families),
``finite_nets`` and ``continuum_nets`` (evaluators), ``transforms``
(discretization and homogenization), ``harness`` (convergence sweeps) and
``cli``.
"""

from __future__ import annotations

from .continuum_nets import (
    ContinuumNetParams,
    DipanetParams,
    OdeNetParams,
    Solver,
    eval_deepcnn,
    eval_deeprescnn,
    eval_dipanet,
    eval_neuralode,
    eval_pointwise_cnn,
)
from .errors import (
    DipanetError,
    DivergenceError,
    DomainError,
    InconsistentFamilyError,
    OverlapError,
    PreconditionError,
    ResourceError,
    StructuralError,
)
from .finite_nets import FiniteNetParams, eval_deepnet, eval_deepresnet
from .funcrep import IDENTITY, RELU, TANH, ZERO, Activation, ActivationField, Analytic, constant
from .transforms import (
    discretize_depth,
    discretize_dipanet_depth,
    discretize_dipanet_width,
    discretize_width,
    homogenize_depth,
    homogenize_rescnn_depth,
    homogenize_width,
    roundtrip_corollary1,
)

__version__ = "0.1.0"
