from .gof import (
    chisq_gof,
    chisq_statistic,
    ChisqGofResult,
)
from .nested import (
    anova,
    AnovaRow,
    AnovaTable,
    comparison_edge,
    describe_mixture,
    lrt_nested,
    mixture_pvalue,
    NestedTestResult,
    test_strata,
)
from .profile import (
    hazard_ci,
    HazardBand,
    profile_endpoint,
    profile_parameter,
    ProfileCurve,
)
from .threshold import (
    nc_score_test,
    ThresholdDiag,
    ThresholdEstimate,
    tstab,
)
