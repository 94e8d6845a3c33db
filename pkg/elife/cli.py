from argparse import ArgumentParser
from logging import getLogger
import math
import sys

import pandas as pd

from . import (
    families,
    report,
)
from .data_model import (
    ExceedanceConfig,
    JAPANESE_FEMALE_PATH,
    load_csv,
    load_japanese_female,
)
from .errors import (
    ElifeNumericalError,
    ElifeValidationError,
)
from .gof_plots import (
    emit_svg,
    ncscore_plot_data,
    npmle_plot_data,
    plotting_positions,
    POSITION_KINDS,
    profile_plot_data,
    tstab_plot_data,
)
from .inference import (
    anova,
    chisq_gof,
    comparison_edge,
    hazard_ci,
    lrt_nested,
    nc_score_test,
    NestedTestResult,
    profile_endpoint,
    test_strata,
    tstab,
)
from .npmle import npmle
from .optim_fit import fit
from .sampling import (
    bootstrap_lrt,
    sample_elife,
    SamplingScheme,
    SCHEME_KINDS,
)
from .settings import (
    ArgumentError,
    build,
    PARAM_FLAGS,
    REQUIRED,
)
from .watcher import (
    verbosity_level,
    watch,
)

log = getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

BUILTIN_PREFIX = "builtin:"
BUILTIN = {
    "japanese_female": (load_japanese_female, JAPANESE_FEMALE_PATH),
}

exit_ = sys.exit


def _builtin(config):
    name = config.data[len(BUILTIN_PREFIX):]
    try:
        return BUILTIN[name]
    except KeyError:
        raise ArgumentError("Unknown builtin dataset {!r}, expected one of "
                            "{}".format(name, ", ".join(BUILTIN))) from None


def _load(config):
    if config.data.startswith(BUILTIN_PREFIX):
        return _builtin(config)[0]()
    return load_csv(config.data, config.columns, unit=config.unit)


def input_path(config):
    if config.data is None:
        return None
    if config.data.startswith(BUILTIN_PREFIX):
        return _builtin(config)[1]
    return config.data


def _exceedances(config):
    return ExceedanceConfig(float(config.thresh))


def _alts(config):
    alt = config.alt
    return [alt] if isinstance(alt, str) else list(alt)


def _svg(config, plot):
    if config.svg:
        emit_svg(plot, config.svg)


def _fit(config):
    fr = fit(_load(config), config.family, _exceedances(config),
             thresholds=config.thresholds)
    log.info("\n%s", fr.summary())
    return fr


def _npmle(config):
    scdf = npmle(_load(config), _exceedances(config))
    _svg(config, npmle_plot_data(scdf))
    return scdf


def _anova(config):
    alts = _alts(config)
    for alt in alts:
        comparison_edge(config.null, alt)
    d, cfg = _load(config), _exceedances(config)
    fits = [fit(d, name, cfg) for name in [config.null] + alts]
    if len(fits) == 2:
        return lrt_nested(*fits)
    return anova(*fits)


def _tstab(config):
    diag = tstab(_load(config), config.thresholds,
                 family=config.family or "gp", level=config.level,
                 jobs=config.jobs)
    _svg(config, tstab_plot_data(diag))
    return diag


def _ncscore(config):
    diag = nc_score_test(_load(config), config.thresholds, jobs=config.jobs)
    _svg(config, ncscore_plot_data(diag))
    return diag


def _profile_endpoint(config):
    curve = profile_endpoint(_load(config), _exceedances(config),
                             psi_grid=config.psi_grid, level=config.level)
    _svg(config, profile_plot_data(curve))
    return curve


def _hazard(config):
    fr = fit(_load(config), config.family, _exceedances(config),
             thresholds=config.thresholds)
    return hazard_ci(fr, config.times, method=config.method,
                     level=config.level).to_frame()


def _sample(config):
    p = families.params(config.family, thresholds=config.thresholds,
                        **config.params)
    scheme = SamplingScheme(
        config.scheme,
        0.0 if config.lower is None else config.lower,
        math.inf if config.upper is None else config.upper,
        config.lower2,
        config.upper2,
    )
    return sample_elife(int(config.n), p, scheme, int(config.seed)).to_frame()


def _boot_lrt(config):
    alts = _alts(config)
    if len(alts) != 1:
        raise ArgumentError("boot-lrt takes a single --alt")
    comparison_edge(config.null, alts[0])
    result = bootstrap_lrt(
        _load(config), config.null, alts[0], _exceedances(config),
        B=int(config.B), seed=int(config.seed),
        granularity=config.granularity, jobs=config.jobs,
    )
    if config.csv:
        result.to_csv(config.csv)
    return {
        "test": NestedTestResult.from_bootstrap(result),
        "bootstrap": result,
    }


def _gof(config):
    fr = fit(_load(config), config.family, _exceedances(config),
             thresholds=config.thresholds)
    plot = plotting_positions(fr, kind=config.kind, level=config.level)
    _svg(config, plot)
    return plot.to_frame()


def _strata(config):
    return test_strata(_load(config), config.family, _exceedances(config),
                       thresholds=config.thresholds)


def _chisq_gof(config):
    fr = fit(_load(config), config.family, _exceedances(config),
             thresholds=config.thresholds)
    return chisq_gof(fr.data, fr, pool_min=config.pool_min, B=int(config.B),
                     seed=int(config.seed), granularity=config.granularity,
                     jobs=config.jobs)


COMMANDS = {
    "fit": _fit,
    "npmle": _npmle,
    "anova": _anova,
    "tstab": _tstab,
    "ncscore": _ncscore,
    "profile-endpoint": _profile_endpoint,
    "hazard": _hazard,
    "sample": _sample,
    "boot-lrt": _boot_lrt,
    "gof": _gof,
    "strata": _strata,
    "chisq-gof": _chisq_gof,
}


def write(result, config, out=None):
    out = out or sys.stdout
    if isinstance(result, pd.DataFrame):
        if config.output:
            report.write_csv(result, config.output)
        else:
            result.to_csv(out, index=False, float_format="%.10g")
        return
    path = input_path(config)
    if config.output:
        report.write_json(result, config.output, config._asdict(), path)
    else:
        out.write(report.dumps(result, config._asdict(), path))


def parser():
    p = ArgumentParser(prog="elife", description="""\
    Likelihood inference for censored and truncated lifetimes.

    Each command reads a CSV of records (or a bundled dataset given as
    builtin:NAME), works on the exceedances over --thresh and writes JSON or
    CSV to --output (standard output by default).
    """)
    p.add_argument("command", choices=sorted(REQUIRED))
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="Log progress to stderr; repeat for debug detail.")
    p.add_argument("--config", help="JSON file of options; flags win.")
    p.add_argument("--data", help="Input CSV or builtin:japanese_female.")
    p.add_argument("--column", dest="columns", action="append",
                   metavar="FIELD=COLUMN",
                   help="Map a record field to a CSV column.")
    p.add_argument("--unit")
    p.add_argument("--family", choices=families.FAMILY_NAMES)
    p.add_argument("--null", choices=families.FAMILY_NAMES)
    p.add_argument("--alt", action="append", choices=families.FAMILY_NAMES,
                   help="Alternative family; anova accepts several.")
    p.add_argument("--thresh", type=float)
    p.add_argument("--thresholds", type=float, nargs="+",
                   help="Threshold grid, or gppiece breaks.")
    for name in PARAM_FLAGS:
        p.add_argument("--" + name, type=float, dest=name,
                       help="Parameter value for sample.")
    p.add_argument("--n", type=int, help="Sample size.")
    p.add_argument("--scheme", choices=SCHEME_KINDS)
    p.add_argument("--lower", type=float)
    p.add_argument("--upper", type=float)
    p.add_argument("--lower2", type=float)
    p.add_argument("--upper2", type=float)
    p.add_argument("-B", type=int, dest="B", help="Simulated replicates.")
    p.add_argument("--seed", type=int)
    p.add_argument("--psi-grid", type=float, nargs="+")
    p.add_argument("--level", type=float)
    p.add_argument("--kind", choices=POSITION_KINDS)
    p.add_argument("--method", choices=("wald", "profile"))
    p.add_argument("--times", type=float, nargs="+")
    p.add_argument("--pool-min", type=float)
    p.add_argument("--granularity", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("-o", "--output")
    p.add_argument("--svg")
    p.add_argument("--csv", help="Replicate statistics of boot-lrt.")
    return p


def main(argv=None):

    def _main():
        parsed = parser().parse_args(argv)
        if parsed.verbose:
            watch("elife", verbosity_level(parsed.verbose))
        try:
            config = build(parsed, parsed.config)
            result = COMMANDS[config.command](config)
            write(result, config)
        except (ArgumentError, ElifeValidationError) as e:
            log.debug("validation failure", exc_info=True)
            print("elife: error: {}".format(e), file=sys.stderr)
            return exit_(EXIT_VALIDATION)
        except ElifeNumericalError as e:
            log.debug("numerical failure", exc_info=True)
            print("elife: numerical failure: {}".format(e), file=sys.stderr)
            return exit_(EXIT_NUMERICAL)
        return exit_(EXIT_OK)

    return _main()
