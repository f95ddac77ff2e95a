"""Finite feedback schemes for quasi-static MIMO channels.

Construction of component space-time codes and feedback rules, rank-based
full-diversity certification, ML decoding and seeded BER simulation.
"""

from .algebra import (
    AlgebraicRotation,
    Constellation,
    PhasorSet,
    besicovitch_exponents,
    besicovitch_set,
    golden_phasor,
    load_rotation,
    make_constellation,
    verify_rotation,
)
from .codes import (
    FeedbackRule,
    FiniteFeedbackScheme,
    LinearDispersionCode,
    alamouti_code,
    antenna_selection_scheme,
    beamforming_scheme,
    dft_beamformers,
    encode,
    golden_thread_scheme,
    heath_paulraj_vectors,
    single_code_scheme,
    spatial_multiplexing_code,
    switching_scheme,
    t1_scheme,
    threaded_scheme,
)
from .decoder import ml_decode_exhaustive, sphere_decode
from .diversity import DiversityCertificate, certify_full_diversity, diversity_upper_bound, stack_differences
from .feedback import FeedbackDecision, min_distance_exhaustive, min_distance_lattice, select
from .simulator import SimConfig, SimResult, estimate_diversity_slope, power_normalize, run_ber

__version__ = "0.1.0"
