"""condensim: condensing zero-range processes and their absorbed
simplex-diffusion scaling limit, with a verification harness."""

from .bumps import BumpFunction, standard_bumps
from .chain import (
    ChainSpec,
    HarmonicBasis,
    TraceChainSpec,
    UpsilonMap,
    dirichlet_matrix,
    harmonic_extensions,
    hitting_diagonal_min,
    invariant_measure,
    superharmonic_radius,
    trace_rates,
    upsilon_map,
    validate_chain,
)
from .config import RunConfig, config_hash, emit_config, parse_config
from .diffusion import (
    AbsorptionTrace,
    DiffusionConfig,
    DiffusionEnsemble,
    DiffusionState,
    drift,
    em_step,
    make_state,
    noise_basis,
    simulate_diffusion_ensemble,
    simulate_diffusion_path,
)
from .experiments import (
    SuperharmonicReport,
    HittingBoundCheck,
    WinnerHistogram,
    compare_winner,
    ks_distance,
    martingale_residual,
    superharmonic_sign_check,
    hitting_bound_check,
    generator_taylor_residual,
    trace_rate_mc,
    winner_distribution,
)
from .paths import PathSample
from .zrp import (
    CondensationRecord,
    ZrpConfig,
    ZrpEnsemble,
    jump_rate_g,
    simulate_zrp_ensemble,
    simulate_zrp_path,
    zrp_generator_apply,
)

__version__ = "0.1.0"
