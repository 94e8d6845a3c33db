"""Likelihood inference for censored and truncated lifetime data."""

__version__ = "0.3.0"

from .data_model import (  # noqa: E402
    Dataset,
    ExceedanceConfig,
    LifetimeRecord,
    load_csv,
    load_japanese_female,
    to_exceedances,
    validate_record,
)
from .families import (  # noqa: E402
    get_family,
    gppiece_params,
    params,
    ParamVector,
)
from .likelihood import (  # noqa: E402
    loglik,
    LoglikOptions,
)
from .npmle import (  # noqa: E402
    npmle,
    StepCDF,
)
from .optim_fit import (  # noqa: E402
    fit,
    FitOptions,
    FitResult,
)
from .sampling import (  # noqa: E402
    bootstrap_lrt,
    sample_elife,
    SamplingScheme,
)
