"""Lifetime records, datasets and the exceedance transform.

A record stores its censoring set as the pair ``(time1, time2)`` together
with an event code, and its truncation window(s) as ``(ltrunc1, rtrunc1)``
and optionally ``(ltrunc2, rtrunc2)``. Absent bounds are stored as explicit
infinities so that every formula downstream is total.

Event codes:

* ``0`` right-censored, the lifetime exceeds ``time1`` (``time2`` is +inf)
* ``1`` observed, ``time1 == time2``
* ``2`` left-censored, the lifetime is at most ``time2``
* ``3`` interval-censored, the lifetime lies in ``(time1, time2]``
"""

import collections
from dataclasses import (
    dataclass,
    replace,
)
from functools import cached_property
from logging import getLogger
import math
import os
from typing import (
    Dict,
    Hashable,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import pandas as pd

from .errors import (
    AmbiguousExceedanceError,
    BoundsError,
    CodeError,
    ElifeValidationError,
    EmptyDatasetError,
    InvalidThresholdError,
    IoError,
    NoExceedancesError,
    ParseError,
    TruncationError,
)

log = getLogger(__name__)

INF = math.inf

EVENT_CODES = {
    0: "right-censored",
    1: "observed",
    2: "left-censored",
    3: "interval-censored",
}

CANONICAL_FIELDS = (
    "time", "time2", "event", "ltrunc", "rtrunc", "ltrunc2", "rtrunc2",
    "weight", "stratum",
)

ALIASES = {
    "time1": "time",
    "ltrunc1": "ltrunc",
    "rtrunc1": "rtrunc",
    "weights": "weight",
}

_INFINITIES = {
    "inf": INF, "+inf": INF, "infinity": INF, "+infinity": INF,
    "-inf": -INF, "-infinity": -INF,
}

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

JAPANESE_FEMALE_PATH = os.path.join(DATA_DIR, "japanese_female.csv")

JAPANESE_SCHEMA = {
    "time": "age",
    "time2": "age_upper",
    "event": "event",
    "rtrunc": "rtrunc",
    "weight": "count",
    "stratum": "cohort",
}


@dataclass(frozen=True)
class LifetimeRecord:
    time1: float
    time2: float
    event: int
    ltrunc1: float = -INF
    rtrunc1: float = INF
    ltrunc2: Optional[float] = None
    rtrunc2: Optional[float] = None
    weight: float = 1.0
    stratum: Optional[str] = None

    def __post_init__(self):
        _check_record(self)

    @property
    def doubly_truncated(self):
        return self.ltrunc2 is not None

    @property
    def windows(self):
        """Truncation windows as a tuple of ``(lower, upper)`` pairs."""
        if self.doubly_truncated:
            return (self.ltrunc1, self.rtrunc1), (self.ltrunc2, self.rtrunc2)
        return (self.ltrunc1, self.rtrunc1),

    def as_dict(self):
        return {
            "time": self.time1, "time2": self.time2, "event": self.event,
            "ltrunc": self.ltrunc1, "rtrunc": self.rtrunc1,
            "ltrunc2": self.ltrunc2, "rtrunc2": self.rtrunc2,
            "weight": self.weight, "stratum": self.stratum,
        }


def _inside(lower, upper, windows):
    return any(lo <= lower and upper <= hi for lo, hi in windows)


def _check_record(r):
    values = (r.time1, r.time2, r.ltrunc1, r.rtrunc1, r.weight)
    if any(math.isnan(v) for v in values):
        raise BoundsError("record contains NaN")
    if r.event not in EVENT_CODES:
        raise CodeError("unknown event code {!r}".format(r.event))
    if r.time1 > r.time2:
        raise BoundsError(
            "time {} exceeds time2 {}".format(r.time1, r.time2)
        )
    if r.event == 1 and r.time1 != r.time2:
        raise BoundsError("observed failure needs time == time2")
    if r.event == 3 and r.time1 == r.time2:
        raise BoundsError("interval-censored record needs time < time2")
    if r.event == 0 and r.time2 != INF:
        raise BoundsError("right-censored record needs time2 = inf")
    if not (math.isfinite(r.weight) and r.weight >= 0):
        raise BoundsError("weight must be finite and nonnegative")
    if r.ltrunc1 > r.rtrunc1:
        raise TruncationError("ltrunc exceeds rtrunc")
    if (r.ltrunc2 is None) != (r.rtrunc2 is None):
        raise TruncationError("second truncation window needs both bounds")
    if r.doubly_truncated:
        if not r.rtrunc1 < r.ltrunc2 <= r.rtrunc2:
            raise TruncationError(
                "truncation windows must be disjoint and ordered"
            )
    windows = r.windows
    if r.event in (1, 3):
        if not _inside(r.time1, r.time2, windows):
            raise TruncationError(
                "failure interval [{}, {}] outside truncation window"
                .format(r.time1, r.time2)
            )
    elif r.event == 0:
        if r.doubly_truncated or r.rtrunc1 != INF:
            raise TruncationError(
                "right-censored record cannot be right-truncated"
            )
        if r.ltrunc1 > r.time1:
            raise TruncationError("censoring time precedes ltrunc")
    elif r.time2 <= r.ltrunc1:
        raise TruncationError("left-censoring bound precedes ltrunc")


def _real(raw, name, default=None):
    value = raw.get(name)
    if value is None:
        return default
    if isinstance(value, str):
        text = value.strip().lower()
        if not text or text in ("na", "nan", "none"):
            return default
        if text in _INFINITIES:
            return _INFINITIES[text]
        try:
            return float(text)
        except ValueError:
            raise ParseError(
                "cannot parse {!r} as a number".format(value), None, name
            ) from None
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParseError(
            "cannot parse {!r} as a number".format(value), None, name
        ) from None
    return default if math.isnan(value) else value


def _code(raw):
    value = _real(raw, "event")
    if value is None:
        return None
    if value != int(value) or int(value) not in EVENT_CODES:
        raise CodeError("unknown event code {!r}".format(raw.get("event")))
    return int(value)


def _label(raw):
    value = raw.get("stratum")
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    value = str(value).strip()
    return value or None


def _canonical(raw):
    out = {}
    for key, value in raw.items():
        key = ALIASES.get(key, key)
        out[key] = value
    return out


def validate_record(raw: Mapping) -> LifetimeRecord:
    """Build a record from a mapping of canonical field names.

    ``time1``, ``ltrunc1``, ``rtrunc1`` and ``weights`` are accepted as
    aliases. Values may be numbers or strings; ``"inf"``, ``"-inf"`` and
    empty strings stand for infinite or absent bounds.
    """
    raw = _canonical(raw)
    time1 = _real(raw, "time")
    if time1 is None:
        raise ParseError("missing time", None, "time")
    time2 = _real(raw, "time2")
    event = _code(raw)
    if event is None:
        if time2 is None or time2 == time1:
            event, time2 = 1, time1
        elif time2 == INF:
            event = 0
        else:
            event = 3
    elif time2 is None:
        if event == 1:
            time2 = time1
        elif event == 0:
            time2 = INF
        elif event == 2:
            time1, time2 = -INF, time1
        else:
            raise BoundsError("interval-censored record needs time2")
    elif event == 0 and time2 == time1:
        time2 = INF
    elif event == 2 and time2 == time1:
        time1 = -INF
    elif event == 3 and time2 == time1:
        event = 1
    ltrunc2 = _real(raw, "ltrunc2")
    rtrunc2 = _real(raw, "rtrunc2")
    return LifetimeRecord(
        time1=time1,
        time2=time2,
        event=event,
        ltrunc1=_real(raw, "ltrunc", -INF),
        rtrunc1=_real(raw, "rtrunc", INF),
        ltrunc2=ltrunc2,
        rtrunc2=rtrunc2,
        weight=_real(raw, "weight", 1.0),
        stratum=_label(raw),
    )


RecordArrays = collections.namedtuple("RecordArrays", [
    "time1", "time2", "event", "ltrunc1", "rtrunc1", "ltrunc2", "rtrunc2",
    "weight", "doubly",
])


@dataclass(frozen=True)
class Dataset:
    """An ordered, validated collection of records.

    ``thresh`` is the threshold already subtracted from every time, so that
    :func:`to_exceedances` can be applied repeatedly with the same threshold.
    """

    records: Tuple[LifetimeRecord, ...]
    unit: str = "years"
    provenance: str = ""
    thresh: float = 0.0

    def __post_init__(self):
        records = tuple(r for r in self.records if r.weight > 0)
        if not records:
            raise EmptyDatasetError("dataset has no record with weight > 0")
        object.__setattr__(self, "records", records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @cached_property
    def arrays(self) -> RecordArrays:
        rs = self.records
        doubly = np.array([r.doubly_truncated for r in rs], dtype=bool)
        return RecordArrays(
            time1=np.array([r.time1 for r in rs], dtype=float),
            time2=np.array([r.time2 for r in rs], dtype=float),
            event=np.array([r.event for r in rs], dtype=int),
            ltrunc1=np.array([r.ltrunc1 for r in rs], dtype=float),
            rtrunc1=np.array([r.rtrunc1 for r in rs], dtype=float),
            ltrunc2=np.array([np.nan if r.ltrunc2 is None else r.ltrunc2
                              for r in rs], dtype=float),
            rtrunc2=np.array([np.nan if r.rtrunc2 is None else r.rtrunc2
                              for r in rs], dtype=float),
            weight=np.array([r.weight for r in rs], dtype=float),
            doubly=doubly,
        )

    @property
    def total_weight(self):
        return float(np.sum(self.arrays.weight))

    @property
    def strata(self):
        return tuple(r.stratum for r in self.records)

    def subset(self, keep: Sequence[int]) -> "Dataset":
        return replace(self, records=tuple(self.records[i] for i in keep))

    def split(self, labels: Optional[Sequence[Hashable]] = None):
        """Partition the records by label, preserving first-seen order."""
        if labels is None:
            labels = self.strata
        if len(labels) != len(self.records):
            raise ElifeValidationError(
                "got {} labels for {} records".format(len(labels), len(self))
            )
        groups: Dict[Hashable, list] = {}
        for record, label in zip(self.records, labels):
            groups.setdefault(label, []).append(record)
        return {
            label: replace(self, records=tuple(records))
            for label, records in groups.items()
        }

    @classmethod
    def from_arrays(cls, time1, time2=None, event=None, ltrunc1=None,
                    rtrunc1=None, weight=None, ltrunc2=None, rtrunc2=None,
                    unit="years", provenance="", thresh=0.0):
        """Build a dataset from (broadcastable) arrays of fields."""
        time1 = np.asarray(time1, dtype=float)
        time2 = time1 if time2 is None else time2
        event = 1 if event is None else event
        ltrunc1 = -INF if ltrunc1 is None else ltrunc1
        rtrunc1 = INF if rtrunc1 is None else rtrunc1
        weight = 1.0 if weight is None else weight
        cols = np.broadcast_arrays(
            time1.ravel(), *(np.asarray(c, dtype=float).ravel()
                             for c in (time2, event, ltrunc1, rtrunc1, weight))
        )
        if ltrunc2 is not None:
            second = np.broadcast_arrays(
                cols[0], np.asarray(ltrunc2, dtype=float).ravel(),
                np.asarray(rtrunc2, dtype=float).ravel(),
            )[1:]
        else:
            second = (None, None)
        records = []
        for i in range(cols[0].size):
            records.append(LifetimeRecord(
                time1=float(cols[0][i]),
                time2=float(cols[1][i]),
                event=int(cols[2][i]),
                ltrunc1=float(cols[3][i]),
                rtrunc1=float(cols[4][i]),
                ltrunc2=None if second[0] is None else float(second[0][i]),
                rtrunc2=None if second[1] is None else float(second[1][i]),
                weight=float(cols[5][i]),
            ))
        return cls(tuple(records), unit=unit, provenance=provenance,
                   thresh=thresh)


@dataclass(frozen=True)
class ExceedanceConfig:
    thresh: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.thresh) or self.thresh < 0:
            raise InvalidThresholdError(
                "threshold must be finite and nonnegative, got {!r}"
                .format(self.thresh)
            )


def _resolve_schema(columns, schema):
    if schema is None:
        schema = {}
        for column in columns:
            name = ALIASES.get(column, column)
            if name in CANONICAL_FIELDS:
                schema.setdefault(name, column)
    else:
        schema = {ALIASES.get(k, k): v for k, v in schema.items()}
    for name, column in schema.items():
        if name not in CANONICAL_FIELDS:
            raise ParseError(
                "unknown canonical field {!r} in schema".format(name), 0
            )
        if column not in columns:
            raise ParseError("column not found in header", 0, column)
    if "time" not in schema:
        raise ParseError("no column mapped to time", 0)
    return schema


def load_csv(path, schema: Optional[Mapping[str, str]] = None,
             unit="years", provenance=None) -> Dataset:
    """Load a dataset from a UTF-8 CSV file with a header row.

    ``schema`` maps canonical field names to column names; without it,
    columns named after canonical fields (or their aliases) are used.
    Rows are numbered from 1, the header excluded. Rows with zero weight
    are dropped.
    """
    if not os.path.isfile(path):
        raise IoError("no such file: {}".format(path))
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False,
                            skipinitialspace=True, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise EmptyDatasetError("{} is empty".format(path)) from None
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise IoError("cannot read {}: {}".format(path, e)) from e
    schema = _resolve_schema(list(frame.columns), schema)
    records, failures = [], []
    dropped = 0
    for row, values in enumerate(frame.to_dict("records"), start=1):
        raw = {name: values[column] for name, column in schema.items()}
        try:
            record = validate_record(raw)
        except ElifeValidationError as e:
            column = getattr(e, "column", None)
            column = schema.get(column, column)
            msg = e.msg if isinstance(e, ParseError) else str(e)
            failures.append((row, column, msg))
            continue
        if record.weight == 0:
            dropped += 1
            continue
        records.append(record)
    if failures:
        for row, column, msg in failures:
            log.warning("%s row %d: %s", path, row, msg)
        row, column, msg = failures[0]
        if len(failures) > 1:
            msg += " (and {} more invalid rows)".format(len(failures) - 1)
        raise ParseError(msg, row, column)
    if not records:
        raise EmptyDatasetError("{} holds no record with weight > 0"
                                .format(path))
    log.info("loaded %d records from %s (%d with zero weight dropped)",
             len(records), path, dropped)
    return Dataset(tuple(records), unit=unit,
                   provenance=provenance or os.path.basename(path))


def load_japanese_female() -> Dataset:
    """Female Japanese semi-supercentenarian death counts by birth cohort.

    Interval-censored to one-year age bands and right-truncated at the
    age reached at the end of 2020 by the oldest member of each cohort.
    """
    return load_csv(JAPANESE_FEMALE_PATH, JAPANESE_SCHEMA,
                    provenance="japanese_female.csv")


def _largest_time(d):
    a = d.arrays
    finite = np.where(np.isfinite(a.time2), a.time2, a.time1)
    return float(np.max(finite))


def to_exceedances(d: Dataset, cfg: ExceedanceConfig) -> Dataset:
    """Shift a dataset to exceedances over ``cfg.thresh``.

    Thresholds are on the original time scale: applying the transform twice
    with the same threshold returns the dataset unchanged. A failure window
    that straddles the threshold is ambiguous and raises, except for a
    left-censored record with no lower bound whose truncation window starts
    at or above the threshold: it becomes an interval-censored exceedance
    starting at the window.
    """
    if cfg.thresh < d.thresh:
        raise InvalidThresholdError(
            "dataset already holds exceedances over {}, cannot lower the "
            "threshold to {}".format(d.thresh, cfg.thresh)
        )
    if cfg.thresh == d.thresh:
        return d
    s = cfg.thresh - d.thresh
    if s >= _largest_time(d):
        raise InvalidThresholdError(
            "threshold {} is not below the largest observed time"
            .format(cfg.thresh)
        )
    kept = []
    for i, r in enumerate(d.records):
        if r.time2 <= s:
            continue
        if r.event == 1 and r.time1 <= s:
            continue
        if r.event == 0 and r.time1 < s:
            # survivors censored below the threshold are not known to exceed
            continue
        if r.event in (2, 3) and r.time1 < s < r.time2 and (
                r.time1 > -INF or r.ltrunc1 < s):
            raise AmbiguousExceedanceError(
                "failure window ({}, {}] straddles the threshold {}"
                .format(r.time1 + d.thresh, r.time2 + d.thresh, cfg.thresh),
                i,
            )
        windows = [(max(lo - s, 0.0), hi - s) for lo, hi in r.windows]
        windows = [w for w in windows if w[1] > 0]
        if not windows:
            continue
        time1 = max(r.time1 - s, 0.0)
        event = r.event
        if event in (2, 3) and r.ltrunc1 >= s:
            time1 = max(time1, r.ltrunc1 - s)
        if event == 2 and time1 > 0:
            event = 3
        second = windows[1] if len(windows) > 1 else (None, None)
        kept.append(LifetimeRecord(
            time1=time1,
            time2=r.time2 - s,
            event=event,
            ltrunc1=windows[0][0],
            rtrunc1=windows[0][1],
            ltrunc2=second[0],
            rtrunc2=second[1],
            weight=r.weight,
            stratum=r.stratum,
        ))
    if not kept:
        raise NoExceedancesError(
            "no exceedances over threshold {}".format(cfg.thresh)
        )
    log.debug("%d of %d records exceed %s", len(kept), len(d), cfg.thresh)
    return Dataset(tuple(kept), unit=d.unit, provenance=d.provenance,
                   thresh=cfg.thresh)
