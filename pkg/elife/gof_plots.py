"""Goodness-of-fit plotting positions adjusted for truncation and censoring,
and SVG output.

Each observed failure ``y_i`` with truncation windows ``W_i`` gets a model
position ``F_i(y_i) = P(Y <= y_i | Y in W_i)`` and an empirical position
``Fn_i(y_i)``, the same conditional probability under the nonparametric
estimate fitted to every record, rescaled by ``n / (n + 1)``. Censored
records shape the nonparametric estimate but are not drawn.
"""

from dataclasses import (
    dataclass,
    field,
)
from logging import getLogger
import math
from typing import (
    Optional,
    Tuple,
)

from matplotlib import rc_context
from matplotlib.figure import Figure
import numpy as np
import pandas as pd
from scipy import stats

from . import families
from .errors import (
    DomainError,
    ElifeValidationError,
    IoError,
    NoObservedFailuresError,
)
from .npmle import (
    npmle,
    StepCDF,
)
from .optim_fit import FitResult

log = getLogger(__name__)

POSITION_KINDS = ("pp", "qq", "tmd", "exp", "erp")
PLOT_KINDS = POSITION_KINDS + ("profile", "tstab", "ncscore", "npmle")
DEFAULT_LEVEL = 0.95
UPPER_CLIP = 1.0 - 1e-12
WIDTH, HEIGHT = 640, 480


@dataclass(frozen=True, eq=False)
class PlotData:
    kind: str
    x: np.ndarray
    y: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""
    reference: Optional[str] = None
    hline: Optional[float] = None
    overlay: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None,
                                                            repr=False)

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise DomainError("unknown plot kind {!r}".format(self.kind))
        n = np.size(self.x)
        for name in ("y", "lower", "upper"):
            value = getattr(self, name)
            if value is not None and np.size(value) != n:
                raise DomainError(
                    "{} has {} points, x has {}".format(name, np.size(value),
                                                        n)
                )

    @property
    def has_band(self):
        return self.lower is not None and self.upper is not None

    def to_frame(self):
        columns = {"x": self.x, "y": self.y}
        if self.has_band:
            columns.update(lower=self.lower, upper=self.upper)
        return pd.DataFrame(columns)

    def to_csv(self, path):
        try:
            self.to_frame().to_csv(path, index=False, float_format="%.10g")
        except OSError as e:
            raise IoError("cannot write {}: {}".format(path, e)) from e


def _windows(record):
    windows = [(max(record.ltrunc1, 0.0), record.rtrunc1)]
    if record.doubly_truncated:
        windows.append((record.ltrunc2, record.rtrunc2))
    return windows


def _conditional_cdf(survival, y, windows):
    """``P(Y <= y | Y in union of windows)`` for a survival function."""
    mass = below = 0.0
    for lo, hi in windows:
        s_lo = survival(lo)
        mass += s_lo - survival(hi)
        below += s_lo - survival(min(max(y, lo), hi))
    return below / mass if mass > 0 else math.nan


def _conditional_quantile(p, q, windows):
    """Inverse of :func:`_conditional_cdf` under the fitted model."""
    masses = [families.survival(p, lo) - families.survival(p, hi)
              for lo, hi in windows]
    target = q * sum(masses)
    for (lo, hi), m in zip(windows, masses):
        if target <= m or (lo, hi) == windows[-1]:
            s = max(families.survival(p, lo) - min(target, m), 0.0)
            return min(families.inverse_cum_hazard(p, -math.log(s))
                       if s > 0 else hi, hi)
        target -= m


def _positions(fr: FitResult, scdf: StepCDF):
    d = fr.data
    p = fr.estimates
    observed = [r for r in d.records if r.event == 1]
    if not observed:
        raise NoObservedFailuresError(
            "no observed failures to plot; every record is censored")
    weights = np.array([r.weight for r in observed])
    if np.any(np.abs(weights - np.rint(weights)) > 1e-9):
        raise ElifeValidationError(
            "plotting positions need integer weights on observed failures"
        )
    counts = np.rint(weights).astype(int)
    n = int(counts.sum())
    if n == 0:
        raise NoObservedFailuresError(
            "every observed failure has zero weight")
    model = np.array([
        _conditional_cdf(lambda t: families.survival(p, t), r.time1,
                         _windows(r)) for r in observed
    ])
    empirical = np.array([
        _conditional_cdf(scdf.survival, r.time1, _windows(r))
        for r in observed
    ]) * n / (n + 1.0)
    keep = np.isfinite(model) & np.isfinite(empirical)
    if not np.all(keep):
        log.warning("dropped %d failures with empty truncation mass",
                    int(np.sum(~keep)))
    rows = [r for r, k in zip(observed, keep) if k]
    return (np.repeat(model[keep], counts[keep]),
            np.repeat(empirical[keep], counts[keep]),
            [r for r, c in zip(rows, counts[keep]) for _ in range(c)])


def _band(n, level):
    i = np.arange(1, n + 1)
    tail = (1.0 - level) / 2.0
    return (stats.beta.ppf(tail, i, n + 1 - i),
            stats.beta.ppf(1.0 - tail, i, n + 1 - i))


def _model_quantile(p, u):
    return families.quantile(p, np.minimum(u, UPPER_CLIP))


def _exp_scale(u):
    return -np.log1p(-np.minimum(u, UPPER_CLIP))


def plotting_positions(fr: FitResult, scdf: Optional[StepCDF] = None,
                       kind="pp", level=DEFAULT_LEVEL) -> PlotData:
    """Plotting positions of the observed failures in ``fr.data``.

    The nonparametric estimate is computed from the same records unless
    given. ``x`` is always the empirical axis, and pointwise bands are
    order-statistic beta quantiles mapped like ``x``.
    """
    if kind not in POSITION_KINDS:
        raise DomainError("kind must be one of {}, got {!r}".format(
            ", ".join(POSITION_KINDS), kind))
    if scdf is None:
        scdf = npmle(fr.data)
    model, empirical, rows = _positions(fr, scdf)
    p = fr.estimates
    n = model.size
    lower, upper = _band(n, level)
    name = fr.family.name
    if kind == "pp":
        return PlotData("pp", np.sort(empirical), np.sort(model), lower,
                        upper, "empirical probability", "model probability",
                        "P-P plot ({})".format(name), "diagonal")
    if kind == "qq":
        return PlotData("qq", np.sort(_model_quantile(p, empirical)),
                        np.sort(_model_quantile(p, model)),
                        _model_quantile(p, lower), _model_quantile(p, upper),
                        "theoretical quantile", "rescaled exceedance",
                        "Q-Q plot ({})".format(name), "diagonal")
    if kind == "exp":
        return PlotData("exp", np.sort(_exp_scale(empirical)),
                        np.sort(_exp_scale(model)), _exp_scale(lower),
                        _exp_scale(upper), "empirical cumulative hazard",
                        "model cumulative hazard",
                        "exponential plot ({})".format(name), "diagonal")
    if kind == "tmd":
        x = np.sort(_model_quantile(p, empirical))
        y = np.sort(_model_quantile(p, model))
        return PlotData("tmd", 0.5 * (x + y), y - x,
                        _model_quantile(p, lower) - x,
                        _model_quantile(p, upper) - x, "mean", "difference",
                        "Tukey mean-difference plot ({})".format(name),
                        "zero")
    # Empirically rescaled: x is the empirical conditional position of the
    # failure and y the empirical conditional probability of the model
    # quantile at that position. Both axes live on the empirical scale, so
    # a good fit sits on the diagonal whatever the truncation pattern.
    x = empirical
    y = np.array([
        _conditional_cdf(scdf.survival,
                         _conditional_quantile(p, u * (n + 1.0) / n,
                                               _windows(r)),
                         _windows(r)) * n / (n + 1.0)
        for u, r in zip(x, rows)
    ])
    order = np.argsort(x, kind="stable")
    return PlotData("erp", x[order], y[order], lower, upper,
                    "empirical probability", "rescaled model probability",
                    "empirically rescaled plot ({})".format(name),
                    "diagonal")


def profile_plot_data(curve) -> PlotData:
    return PlotData(
        "profile", curve.psi, curve.deviance,
        xlabel=curve.parameter, ylabel="profile deviance",
        title="profile log likelihood", hline=-curve.cutoff,
    )


def tstab_plot_data(diag) -> PlotData:
    ok = [e for e in diag.entries if not e.failed]
    return PlotData(
        "tstab",
        np.array([e.thresh for e in ok]),
        np.array([e.estimate for e in ok]),
        np.array([e.lower for e in ok]),
        np.array([e.upper for e in ok]),
        xlabel="threshold", ylabel=diag.parameter,
        title="parameter stability",
    )


def ncscore_plot_data(diag) -> PlotData:
    ok = [e for e in diag.entries if e.pvalue is not None]
    return PlotData(
        "ncscore",
        np.array([e.thresh for e in ok]),
        np.array([e.pvalue for e in ok]),
        xlabel="threshold", ylabel="p-value", title="score test path",
        hline=0.05,
    )


def npmle_plot_data(scdf: StepCDF, fr: Optional[FitResult] = None,
                    n_points=200) -> PlotData:
    """Nonparametric distribution function with an optional fitted curve."""
    edges = np.unique(np.concatenate((scdf.a, scdf.b)))
    x = edges[np.isfinite(edges)]
    y = np.asarray(scdf(x), dtype=float)
    overlay = None
    if fr is not None:
        grid = np.linspace(0.0, x.max() if x.size else 1.0, n_points)
        overlay = (grid, np.asarray(families.cdf(fr.estimates, grid)))
    return PlotData("npmle", x, y, xlabel="exceedance",
                    ylabel="distribution function",
                    title="nonparametric estimate", overlay=overlay)


def _draw(ax, pd_):
    if pd_.has_band:
        ax.fill_between(pd_.x, pd_.lower, pd_.upper, color="0.85",
                        linewidth=0, label="pointwise band")
    if pd_.kind == "tstab":
        ax.errorbar(pd_.x, pd_.y, yerr=(pd_.y - pd_.lower,
                                        pd_.upper - pd_.y),
                    fmt="o", color="black", capsize=3)
    elif pd_.kind == "profile":
        ax.plot(pd_.x, pd_.y, color="black")
    elif pd_.kind == "npmle":
        ax.step(pd_.x, pd_.y, where="post", color="black")
    else:
        ax.plot(pd_.x, pd_.y, "o", color="black", markersize=3)
    if pd_.overlay is not None:
        ax.plot(*pd_.overlay, color="tab:blue")
    if pd_.reference == "diagonal":
        finite = np.concatenate((pd_.x, pd_.y))
        finite = finite[np.isfinite(finite)]
        lo, hi = (finite.min(), finite.max()) if finite.size else (0, 1)
        ax.plot([lo, hi], [lo, hi], color="tab:red", linewidth=1)
    elif pd_.reference == "zero":
        ax.axhline(0.0, color="tab:red", linewidth=1)
    if pd_.hline is not None:
        ax.axhline(pd_.hline, color="tab:red", linewidth=1, linestyle="--")
    ax.set_xlabel(pd_.xlabel)
    ax.set_ylabel(pd_.ylabel)
    ax.set_title(pd_.title)


def emit_svg(pd_: PlotData, path):
    """Write ``pd_`` as a standalone 640x480 SVG, byte-stable for fixed
    input."""
    with rc_context({"svg.hashsalt": "elife", "svg.fonttype": "path"}):
        fig = Figure(figsize=(WIDTH / 72.0, HEIGHT / 72.0), dpi=72)
        _draw(fig.add_subplot(), pd_)
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as e:
            raise IoError("cannot write {}: {}".format(path, e)) from e
    log.debug("wrote %s plot to %s", pd_.kind, path)
