import hashlib
import io
import json
from logging import (
    DEBUG,
    getLogger,
    INFO,
    WARNING,
)
import math

import numpy as np
import pandas as pd
import pytest

from .. import (
    __version__,
    errors,
    report,
)
from ..watcher import (
    verbosity_level,
    watch,
)


class Result:

    def to_dict(self):
        return {"value": np.float64(1.5), "flags": np.array([True, False])}


def test_non_finite_values_become_strings():
    text = report.dumps({"a": math.inf, "b": [-math.inf, math.nan, 1.0]})
    assert json.loads(text) == {"result": {"a": "inf",
                                           "b": ["-inf", "nan", 1.0]}}


def test_result_objects_and_numpy_values():
    out = json.loads(report.dumps({"r": Result(), "n": np.int64(3),
                                   "t": (1, 2)}))
    assert out["result"] == {"n": 3, "r": {"flags": [True, False],
                                           "value": 1.5}, "t": [1, 2]}


def test_output_is_sorted_and_terminated():
    text = report.dumps({"b": 1, "a": 2})
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')


def test_provenance(tmp_path):
    path = tmp_path / "input.csv"
    path.write_bytes(b"time\n1\n")
    prov = report.provenance({"command": "fit"}, str(path))
    assert prov == {
        "version": __version__,
        "config": {"command": "fit"},
        "input_sha256": hashlib.sha256(b"time\n1\n").hexdigest(),
    }
    assert report.provenance({})["input_sha256"] is None


def test_unreadable_input(tmp_path):
    with pytest.raises(errors.IoError):
        report.file_digest(str(tmp_path / "absent.csv"))


def test_write_failures(tmp_path):
    missing = str(tmp_path / "missing" / "out.json")
    with pytest.raises(errors.IoError):
        report.write_json({}, missing)
    with pytest.raises(errors.IoError):
        report.write_csv(pd.DataFrame({"x": [1]}), missing)


@pytest.mark.parametrize(("count", "level"), (
    (0, WARNING),
    (1, INFO),
    (2, DEBUG),
    (5, DEBUG),
))
def test_verbosity_level(count, level):
    assert verbosity_level(count) == level


def test_watch_sends_records_to_stream():
    out = io.StringIO()
    watcher = watch("elife.test_report", INFO, out)
    try:
        getLogger("elife.test_report").info("fitted %s", "gp")
        getLogger("elife.test_report").debug("hidden")
    finally:
        watcher.stop()
    text = out.getvalue()
    assert "fitted gp" in text
    assert "hidden" not in text
    assert "\x1b[" not in text
