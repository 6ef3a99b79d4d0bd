"""Behavioral rate-distortion analysis.

Convert stimulus-response records into effective channels, infer the latent
error-cost geometry, trace rate-distortion frontiers, summarize them with
slope/curvature/AUC signatures, and compare systems with block-paired
statistics.
"""

from ._kernels import active_backend
from .channel import (Channel, InfoSummary, channel_from_counts,
                      expected_distortion, mutual_information, smooth_counts,
                      summarize)
from .cost_fit import (FitResult, OptimizerSettings, PriorConfig,
                       fit_cost_matrix, laplace_stderr, neg_log_posterior)
from .costs import (CostMatrix, cost_from_matrix, generic_labels,
                    random_cost_matrix, zero_one_cost)
from .ingest import (BlockRef, ConfusionCounts, IngestError, LabelSet,
                     TrialRecord, aggregate_counts, load_counts, load_labels,
                     load_trials)
from .signatures import (ExpFit, FitDiagnostics, NormalizedSignature,
                         RDSignature, extract_signature, fit_exponential,
                         generalization_points, normalize_signatures,
                         rmse_diagnostics, severity_beta)
from .solver import (BASettings, RDCurve, RDPoint, ba_optimal_channel,
                     lambda_grid, trace_curve)
from .stats import (BlockKey, PairedTestResult, RegressionResult, assign_q,
                    bh_fdr, fe_regression, match_blocks,
                    nested_interaction_test, paired_compare,
                    wilcoxon_signed_rank)
from .synth import SyntheticObserver, make_observer, sample_counts

__version__ = "0.1.0"
