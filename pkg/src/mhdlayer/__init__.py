"""mhdlayer: simulator and verification laboratory for the 2D MHD
boundary-layer system on a periodic strip, with time-weighted Gaussian
norm diagnostics, good-unknown transforms, and inequality checkers.
"""

from .grid import Grid, build_grid, quad_y
from .fields import (Field, from_function, zeros, dx, dy,
                     cumint_y, tailint_y, derive_vg, lowpass)
from .weights import (WeightSpec, NormSpec, mu_lambda, weighted_l2,
                      weighted_sobolev, weighted_pairing)
from .solver import (State, SolverConfig, RunResult, SolverError,
                     CFLViolation, FloorViolation, step, run, rhs,
                     initial_data, save_checkpoint, load_checkpoint)
from .unknowns import (GoodUnknowns, LinearGood, compute_um_fm, compute_UF,
                       source_S, source_S_tilde, residual_umfm, residual_UF)
from .energy import (EnergyBudget, DiagnosticsFrame, energy,
                     diagnostics_frame, bootstrap_check, fit_decay,
                     norm_comparison, frame_csv_header, frame_csv_row)
from .verify import (InequalityReport, ResidualReport, MMSProblem,
                     decaying_profiles, check_poincare,
                     check_poincare_weighted_y, check_sup_bound,
                     check_technical_lemma, heat_solution_frames,
                     steady_problem, manufactured_problem, residual_problem,
                     mms_convergence, report_json)

__version__ = "0.1.0"
