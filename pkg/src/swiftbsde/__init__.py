"""Theta-scheme FBSDE solver with Shannon-wavelet (SWIFT) conditional expectations."""

from .expectations import (
    CompactKernel,
    ExpectationKernel,
    RowEvaluation,
    build_compact_kernel,
    build_kernel,
    char_increment,
    eval_row,
    expect_brownian,
    expect_plain,
    grid_value_transform,
    odd_frequency_transform,
)
from .oracles import (
    ConvergenceReport,
    black_scholes_reference,
    bs_call_price_delta,
    estimate_order,
    quad_expectation,
    quad_expectation_brownian,
)
from .problems import (
    BUILTIN_NAMES,
    DomainSpec,
    FbsdeProblem,
    ThetaScheme,
    compute_domain,
    make_builtin_problem,
    make_call_problem,
    make_spread_problem,
    problem_from_spec,
    scheme_params,
)
from .solver import (
    ConfigError,
    Diagnostics,
    PicardDivergenceWarning,
    SolutionSlice,
    SolveResult,
    SolverConfig,
    SolverError,
    antireflective_adjust,
    backward_step,
    convergence_sweep,
    picard_solve,
    solve,
    terminal_slice_mixed,
    terminal_slice_quick,
    validate_config,
)
from .wavelets import (
    WaveletGrid,
    alternating_extension_eval,
    eval_scaling,
    inner_product,
    project_coefficients,
)

__version__ = "0.1.0"
