"""Maximum-entropy reconstruction of compound loss densities from fractional moments."""

__version__ = "0.1.0"

from .decompound import (  # noqa: E402
    InfeasibleDecompoundError,
    SeverityMoments,
    fit_individual,
    maxent_psi,
    severity_moments,
)
from .density import DensityOnS, l1_distance  # noqa: E402
from .mem import (  # noqa: E402
    DesignMatrix,
    MemSolution,
    build_design_matrix,
    fit_mem,
    interpolate_density,
    mem_dual,
    mem_gradient,
    mem_reduced_dual,
)
from .model import (  # noqa: E402
    CASES,
    CaseSpec,
    CompoundModel,
    LossDataError,
    LossSample,
    ParameterError,
    case_data,
    load_losses,
    simulate_compound,
    simulate_severities,
    split_observed_test,
)
from .moments import (  # noqa: E402
    AlphaGrid,
    FractionalMoments,
    IllConditionedMomentError,
    MomentError,
    conditional_moments,
    default_alphas,
    empirical_laplace,
)
from .optimize import ConvergenceError, SolverOptions, barzilai_borwein  # noqa: E402
from .risk import GAMMA_LADDER, RiskRow, empirical_var_tvar, resample_ci, risk_table, var_tvar_from_density  # noqa: E402
from .sme import SmeDensity, density_on_s, dual_gradient, dual_objective, fit_sme, partition_function  # noqa: E402
from .validation import GofReport, HistogramSpec, gof_report, histogram_spec  # noqa: E402
