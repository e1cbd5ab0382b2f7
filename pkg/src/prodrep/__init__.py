"""Product replacement chain: simulation and exact mixing analysis."""

__version__ = "0.1.0"

from .groups import (FiniteGroup, GroupSpec, Subgroup, build_group, cyclic,
                     dihedral, generates, minimal_generating_set,
                     parse_group_spec, product, symmetric)
from .chain import (Configuration, expected_increment, sample_stationary,
                    step, worst_case_start)
from .stats import (PairCounts, avoids_subgroup_confinement, half_l1_distance,
                    near_uniform, proportion_matrix, proportion_vector,
                    rows_near_uniform, subgroup_escape_count, value_counts)
from .reps import (FourierVector, Irrep, RepSet, drift_matrix,
                   fourier_coefficient, gap_certificate,
                   group_gap_certificate, nontrivial_irreps,
                   plancherel_norm_sq, row_fourier_coefficient, transform)
from .lumped import (LumpedChain, brute_force_tv, build_lumped, mixing_time,
                     tv_curve)
from .coupling import (CaseBreakdown, CoupledState, case_breakdown,
                       coalescence_experiment, coupled_step,
                       pick_coupling_delta)
from .birthdeath import (BDChain, bd_stationary, domination_check,
                         hitting_moments)
from .deanalysis import (ContractionInstance, fourier_residuals,
                         lower_comparison, run_contraction_harness,
                         smoothed_norm, smoothed_norm_grad)
from .experiments import ExperimentConfig
