"""Composite federated learning simulator: normal-map client updates with
drift correction, plus the Zhang and SCAFFOLD baselines and the stationarity
machinery used to verify them."""

from ._core import (
    Problem,
    Regularizer,
    c0_constant,
    load_idx,
    make_composite_quadratic,
    min_norm_subgradient,
    natural_map,
    normal_map,
    partition_dirichlet,
    partition_sorted_by_label,
    phi_value,
    prox,
    reference_solve,
    run_quadratic,
    run_verification,
    theorem1_params,
    theorem2_params,
)

__all__ = [
    "Problem",
    "Regularizer",
    "c0_constant",
    "load_idx",
    "make_composite_quadratic",
    "min_norm_subgradient",
    "natural_map",
    "normal_map",
    "partition_dirichlet",
    "partition_sorted_by_label",
    "phi_value",
    "prox",
    "reference_solve",
    "run_quadratic",
    "run_verification",
    "theorem1_params",
    "theorem2_params",
]
