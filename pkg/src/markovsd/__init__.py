"""Simulation and design toolkit for K-level successive decoding over
finite-state Markov fading channels."""

__version__ = "0.1.0"

from .fsmc import (Quantizer1D, StateModel, ChannelRealization, lloyd_max,
                   build_fsmc, simulate, save_model, load_model)
from .interleaver import (InterleaverPattern, WeightDistribution, rectangular,
                          binary_weighted, sample_random, training_mask,
                          nesting_vector, default_reps)
from .trellis import (TrellisPosteriors, branch_metric, forward_backward,
                      bit_llr, causal_llr, ied_step)
from .inforate import (MonteCarlo, RateEstimate, PilotUtilityCurve,
                       estimate_level_rate, estimate_level_capacity,
                       overall_rates, pilot_utility, rate_from_mu,
                       capacity_from_mu, default_mu_grid, burn_in_length)
from .optimizer import MuInterpolant, KktSolution, fit_mu, kkt_weights, solve_weights
from .exitchart import (ExitCurve, DecoderFamily, estimator_exit_from_mu,
                        estimator_exit_mc, decoder_input_info,
                        max_supported_rate, optimize_weights_exit,
                        synthetic_decoder_family)
from .exponent import (ExponentCurve, FiniteLengthPlan, e0_subchannel,
                       error_exponent, finite_length_rate, optimal_levels)
from .contraction import (hilbert_metric, birkhoff_tau, theorem_gap_bound,
                          weight_gap_bound, contraction_report)
