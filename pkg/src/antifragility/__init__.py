"""Logarithmic growth rates of positive linear systems, convexity of the
dose-rate curve, and pulsed versus uniform dosing."""

__version__ = "0.1.0"

from .dip import (
    DipClosedForm,
    closed_form_eigenvalue,
    conjugate_limit_check,
    dip_limit_error,
    dip_rate,
)
from .dose import (
    AffineFamily,
    DipFamily,
    DoseFamily,
    SystemModel,
    TabulatedFamily,
    dump_model,
    load_model,
    matrix_at,
)
from .metzler import (
    FluxDecomposition,
    MetzlerMatrix,
    PerronData,
    dominant_eigenvalue,
    flux_compose,
    flux_decompose,
    is_irreducible,
    perron_eigenpair,
    spectral_gap,
    validate_metzler,
)
from .rates import (
    ProtocolComparison,
    RateProfile,
    classify_antifragility,
    compare_protocols,
    estimate_sequential_rate,
    log_rate,
    make_grid,
    sequential_rate,
    sweep,
)
from .simulation import (
    Protocol,
    Trajectory,
    amplitude_corrected_rate,
    estimate_log_rate,
    matrix_exponential,
    simulate,
    total_drug,
)
