"""Consensus proximal-gradient solvers for convolutional sparse
representations: sparse coding, dictionary learning and multi-sensor
anomaly detection."""

from .anomaly import (AnomalyProblem, AnomalySolution, anomaly_score,
                      caddict_admm_consensus, caddict_apg_consensus,
                      flag_scores, flagged_windows)
from .cdl import (CdlConfig, CdlResult, cdl_objective, cdl_train,
                  dict_admm_consensus_update, dict_apg_consensus_update,
                  dict_apg_update, init_dictionary)
from .csc import (CscProblem, cbpdn_solve, csc_admm_solve, csc_fista_solve,
                  default_rho, sherman_morrison_solve)
from .fourier import (FreqBlock, conv_sum, dft_forward, dft_inverse,
                      freq_gradient_csc, freq_gradient_dict)
from .metrics import awgn_corrupt, psnr, sparsity_measure
from .opcount import OpCounter, count_ops
from .prox import (ConsensusSet, ConstraintSetPN, DegenerateFilterError,
                   block_l2_shrink, project_consensus, project_cpn,
                   soft_threshold)
from .signals import (CoefficientMaps, Dictionary, SignalSet, load_dictionary,
                      load_maps, save_dictionary, save_maps)
from .solvers import (Regularizer, SmoothTerm, admm_consensus_run, admm_run,
                      apg_consensus_run, consensus_split_step, l1_regularizer,
                      pg_consensus_step, quadratic_term, total_objective)
from .steps import (ConfigError, InertialConfig, LinOp, StepConfig, StepEngine,
                    StepHistory, StepUndefinedError, bb_step, cauchy_step,
                    consensus_alpha, consensus_cauchy, fista3k_step,
                    inertial_next, inertial_start, power_step_bound)
from .trace import ConvergenceTrace, DivergenceError

__version__ = "0.1.0"

__all__ = [
    "AnomalyProblem", "AnomalySolution", "anomaly_score",
    "caddict_admm_consensus", "caddict_apg_consensus", "flag_scores",
    "flagged_windows",
    "CdlConfig", "CdlResult", "cdl_objective", "cdl_train",
    "dict_admm_consensus_update", "dict_apg_consensus_update",
    "dict_apg_update", "init_dictionary",
    "CscProblem", "cbpdn_solve", "csc_admm_solve", "csc_fista_solve",
    "default_rho", "sherman_morrison_solve",
    "FreqBlock", "conv_sum", "dft_forward", "dft_inverse",
    "freq_gradient_csc", "freq_gradient_dict",
    "awgn_corrupt", "psnr", "sparsity_measure",
    "OpCounter", "count_ops",
    "ConsensusSet", "ConstraintSetPN", "DegenerateFilterError",
    "block_l2_shrink", "project_consensus", "project_cpn", "soft_threshold",
    "CoefficientMaps", "Dictionary", "SignalSet", "load_dictionary",
    "load_maps", "save_dictionary", "save_maps",
    "Regularizer", "SmoothTerm", "admm_consensus_run", "admm_run",
    "apg_consensus_run", "consensus_split_step", "l1_regularizer",
    "pg_consensus_step", "quadratic_term", "total_objective",
    "ConfigError", "InertialConfig", "LinOp", "StepConfig", "StepEngine",
    "StepHistory", "StepUndefinedError", "bb_step", "cauchy_step",
    "consensus_alpha", "consensus_cauchy", "fista3k_step", "inertial_next", "inertial_start",
    "power_step_bound",
    "ConvergenceTrace", "DivergenceError",
]
