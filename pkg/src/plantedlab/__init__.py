"""Finite-template planted submatrix detection: generation, tests, theory and Monte Carlo."""
from .detectors import (ScanPlan, Strategy, TestDecision, TestId, mean_scan_statistic,
                        mean_scan_test, mean_scan_threshold, quad_statistic, quad_test, run_test,
                        sum_statistic, sum_test, var_scan_statistic, var_scan_test,
                        var_scan_threshold)
from .errors import (BranchInapplicableError, BudgetExceededError, ConfigurationError,
                     DomainError, PlantedLabError)
from .harness import (ExperimentConfig, RiskReport, Sweep, emit_report, estimate_risk,
                      make_family, read_report, run_sweep)
from .model import (Block, Dimensions, Hypothesis, Kind, Observation, Placement, PlacementConfig,
                    PlantedInstance, TemplateFamily, coordinate_map, generate, read_matrix,
                    sample_placement, write_matrix)
from .theory import (BoundReport, chi2_mean, chi2_var, energy, exact_second_moment, kl_sigma,
                     lower_bound_conditions, overlap_law, rho_overlap, second_moment_upper_bound,
                     smooth_signal_check, theta_star)

__version__ = "0.1.0"
