"""Polar code construction by quantized evolution of BSC mixtures."""

from .channel import (
    DEDUP_TOL,
    InvalidDistribution,
    Kernel,
    MassDistribution,
    bhattacharyya,
    bsc_for_capacity,
    canonicalize,
    from_bec,
    from_bsc,
    mean_crossover,
    mutual_info,
    parse_channel,
)
from .construct import (
    CodeDesign,
    Construction,
    ConstructionConfig,
    InvalidConfig,
    LeafReport,
    bec_relax,
    bit_reverse_indices,
    conservation_audit,
    evolve,
    good_fraction,
    select_by_error_budget,
    select_by_rate,
)
from .quantize import (
    QuantizeReport,
    decay_diagnostic,
    merge_degrade,
    split_upgrade,
    step_cost_bound_check,
    transport_degrade,
)
from .transform import minus, plus, transform_pair

__version__ = "0.1.0"

__all__ = [
    "DEDUP_TOL",
    "CodeDesign",
    "Construction",
    "ConstructionConfig",
    "InvalidConfig",
    "InvalidDistribution",
    "Kernel",
    "LeafReport",
    "MassDistribution",
    "QuantizeReport",
    "bec_relax",
    "bhattacharyya",
    "bit_reverse_indices",
    "bsc_for_capacity",
    "canonicalize",
    "conservation_audit",
    "decay_diagnostic",
    "evolve",
    "from_bec",
    "from_bsc",
    "good_fraction",
    "mean_crossover",
    "merge_degrade",
    "minus",
    "mutual_info",
    "parse_channel",
    "plus",
    "select_by_error_budget",
    "select_by_rate",
    "split_upgrade",
    "step_cost_bound_check",
    "transform_pair",
    "transport_degrade",
]
