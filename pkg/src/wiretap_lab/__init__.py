"""Wiretap channels with causal state information and secure rate-limited feedback."""

from .capacity import (
    AuxPolicy,
    BoundReport,
    InputPolicy,
    bsc_nostate_capacity,
    bsc_state_capacity,
    corollary_capacity,
    lower_bound,
    optimize,
    special_case,
    upper_bound,
)
from .channels import BscScenario, WiretapSystem, make_bsc, make_state_bsc
from .codec import CodebookSpec, Scheme, build_codebook, design_spec, run_session
from .errors import (
    BudgetExceeded,
    DecodingFailure,
    InfeasibleSpec,
    NotDegraded,
    StructuralAssumptionViolated,
    TooLargeForExact,
    ValidationError,
)
from .harness import ExperimentConfig, verify_consistency
from .prob import Channel, JointPmf, Pmf, binary_entropy, entropy, mutual_information
from .secrecy import SecrecyReport, achievability_verdict, estimate_secrecy, exact_leakage

__version__ = "0.1.0"
