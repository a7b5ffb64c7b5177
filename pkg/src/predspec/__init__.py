"""Suffix-automaton predictive contribution spectra and spectral-frontier fits."""

from predspec.corpus_io import (
    TokenStream,
    load_token_stream,
    prepare_corpus,
    save_token_stream,
    tokenize_bytes,
)
from predspec.automaton import (
    Automaton,
    build_sam,
    compute_occurrences,
    distinct_substring_count,
    state_mass_spectrum,
)
from predspec.spectrum import (
    Distribution,
    Spectrum,
    global_kl_spectrum,
    global_next_distribution,
    kl_divergence,
    normalize_spectrum,
    smooth_spectrum,
    state_next_distribution,
    tail_mass,
)
from predspec.quotient import QuotientStates, kernel_quotient, quotient_spectrum
from predspec.fits import (
    FitResult,
    FrontierTrace,
    LossCurve,
    cross_dataset_regression,
    effective_cutoff,
    excess_loss,
    frontier_fit,
    loglog_fit,
    scaling_slope,
    tail_slope,
)

__version__ = "0.1.0"
