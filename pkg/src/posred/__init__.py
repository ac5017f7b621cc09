"""Balanced truncation with Hankel k-positivity certification."""

__version__ = "0.1.0"

from .balancing import (  # noqa: E402
    BalancedRealization,
    ReductionResult,
    admissible_orders,
    balance,
    balanced_truncation,
    gramians,
    truncate,
)
from .lti import (  # noqa: E402
    StateSpace,
    TimeGrid,
    default_grid,
    impulse_response,
    markov_parameters,
    series,
    transfer_eval,
    validate,
)
from .positivity import (  # noqa: E402
    PositivityReport,
    SignStructureReport,
    compound,
    detect_symmetry,
    external_positivity,
    gk_sign_structure,
    hankel_from_sequence,
    hankel_kernel_matrix,
    k_positivity_order,
    minors_nonneg_up_to,
    sign_changes_minus,
    sign_changes_plus,
)
