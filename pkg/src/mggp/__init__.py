"""Multi-gene genetic programming for symbolic regression, with affine
feature-combination leaves that can be tuned by sign-based gradient steps
under per-node, per-individual or population-wide weight sharing."""

from .bench import Dataset, gen_k11c, gen_sigmoid, gen_ub5d, generate, load_csv, rotation_matrix, save_csv, split
from .backprop import (
    EvalTrace,
    GlobalWeightTable,
    GradientTable,
    RpropParams,
    StepBudget,
    backward,
    forward_trace,
    global_tune,
    irprop_minus_step,
    local_derivative,
    tune,
)
from .errors import DataError, DegenerateDataError, MggpError, StructuralError
from .evolve import Engine, EngineConfig, Individual, ModeConfig, RunBudget, RunResult, run
from .exprtree import (
    Const,
    Fn,
    Func,
    Gene,
    Lcf,
    LcfWeights,
    Node,
    TerminalConfig,
    Var,
    depth,
    eval_batch,
    format_tree,
    node_count,
    parse_tree,
    pick_node,
    random_tree,
    replace_subtree,
    set_logsig_increasing,
)
from .fitness import FitnessReport, LinearModel, evaluate, lcf_ratio, mean_gene_depth, ols_fit, r_squared
from .stats import ComparisonResult, Summary, bonferroni, compare_vs_baseline, mann_whitney_u, summarize

__version__ = "0.1.0"

__all__ = [
    "ComparisonResult",
    "Const",
    "DataError",
    "Dataset",
    "DegenerateDataError",
    "Engine",
    "EngineConfig",
    "EvalTrace",
    "Fn",
    "FitnessReport",
    "Func",
    "Gene",
    "GlobalWeightTable",
    "GradientTable",
    "Individual",
    "Lcf",
    "LcfWeights",
    "LinearModel",
    "MggpError",
    "ModeConfig",
    "Node",
    "RpropParams",
    "RunBudget",
    "RunResult",
    "StepBudget",
    "StructuralError",
    "Summary",
    "TerminalConfig",
    "Var",
    "backward",
    "bonferroni",
    "compare_vs_baseline",
    "depth",
    "eval_batch",
    "evaluate",
    "format_tree",
    "forward_trace",
    "gen_k11c",
    "gen_sigmoid",
    "gen_ub5d",
    "generate",
    "global_tune",
    "irprop_minus_step",
    "lcf_ratio",
    "load_csv",
    "local_derivative",
    "mann_whitney_u",
    "mean_gene_depth",
    "node_count",
    "ols_fit",
    "parse_tree",
    "pick_node",
    "r_squared",
    "random_tree",
    "replace_subtree",
    "rotation_matrix",
    "run",
    "save_csv",
    "set_logsig_increasing",
    "split",
    "stats",
    "summarize",
    "tune",
]
