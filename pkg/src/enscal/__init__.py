"""Statistical calibration of ensemble weather forecasts with BMA and EMOS."""
from importlib import resources

from .bma import (
    BiasCorrection,
    BmaGammaModel,
    BmaNormalModel,
    BmaTruncNormalModel,
    fit_bias_regression,
    fit_bma_gamma,
    fit_bma_normal_crps,
    fit_bma_normal_em,
    fit_bma_truncnormal_ml,
    predict_bma,
)
from .data import (
    Dataset,
    ForecastCase,
    GroupingScheme,
    TrainingWindow,
    load_dataset,
    make_grouping,
    make_window,
    rolling_windows,
    write_dataset,
)
from .distributions import GammaMeanSd, Mixture, Normal, TruncNormal, crps_normal, crps_quadrature, crps_truncnormal
from .emos import EmosModel, fit_emos, predict_emos
from .errors import ConfigError, DataError, EnscalError, NumericalError
from .harness import ExperimentSpec, compare_methods, run_experiment, sweep_training_length
from .modelio import dump_model, load_model
from .optimize import ObjectiveSpec, minimize, nelder_mead
from .synth import generate, study_calendar
from .verification import (
    NOMINAL_LEVEL,
    central_interval,
    crps_ensemble,
    ks_uniform_test,
    pit_histogram,
    pit_value,
    rank_histogram,
    score_report,
    verification_rank,
)

__version__ = "0.1.0"


def sample_path(name: str = "sample.csv") -> str:
    """Filesystem path of a bundled sample file (``sample.csv`` or ``sample.ini``)."""
    return str(resources.files(__package__) / "data" / name)
