"""Nested polar coding for strong coordination over noisy channels."""
__version__ = "0.1.0"

from .prob import (Channel, CoordinationSystem, JointPmf, Pmf, compose_joint, conditional_entropy,
                   degradation_check, entropy, kl_divergence, mutual_information, total_variation)
from .polar import IndexSet, bit_reversal_perm, polar_transform, qary_transform
from .sc import BACKEND, ScPolicy, SymbolJoint, entropy_profile, sc_sweep
from .sets import (ChainLayout, DecodabilityError, PolarSpectrum, SetFamily, alignment_check,
                   build_family, build_spectrum, chain_layout, derive_partition, rate_targeted_sets,
                   threshold_sets)
from .codec import CoordCodec, RandomnessPools
from .metrics import (ExperimentConfig, Rates, SimReport, block_independence_probe, code_rates,
                      dmc_transmit, region_check, run_experiment)
from .oracle import exhaustive_oracle
from .presets import make_system
