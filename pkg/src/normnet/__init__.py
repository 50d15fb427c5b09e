"""Norm-constrained neural networks with explicit constructions and certificates."""

from .activations import (
    ActivationEntry,
    AssumptionViolatedError,
    PiecewiseLinear,
    RegistryError,
    TaylorSpec,
    WeakSpec,
    builtin_registry,
    get_activation,
    register_activation,
    verify_taylor_spec,
    verify_weak_spec,
)
from .network import (
    ArchitectureCert,
    EvalGrid,
    Layer,
    Network,
    augment,
    check_norm_constraint,
    default_grid,
    deserialize,
    evaluate,
    measure_lipschitz_empirical,
    op_norm_inf,
    serialize,
    sup_error,
)
from .algebra import compose, compose_affine, concat, lincomb, lincomb_many, pad

__version__ = "0.1.0"
