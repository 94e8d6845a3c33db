"""JSON and CSV output with provenance."""

import hashlib
import json
from logging import getLogger
import math

import numpy as np
import pandas as pd

from . import __version__
from .errors import IoError

log = getLogger(__name__)


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


class Encoder(json.JSONEncoder):
    """Encodes numpy values, result objects exposing ``to_dict`` and
    non-finite floats (as the strings ``"inf"``, ``"-inf"``, ``"nan"``)."""

    def default(self, o):
        if hasattr(o, "to_dict"):
            return o.to_dict()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, (tuple, set, frozenset)):
            return list(o)
        return json.JSONEncoder.default(self, o)

    def iterencode(self, o, _one_shot=False):
        return super().iterencode(_sanitize(o), _one_shot)


def _sanitize(o):
    if isinstance(o, dict):
        return {str(k): _sanitize(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_sanitize(v) for v in o]
    if isinstance(o, (float, np.floating)):
        return _finite(float(o))
    if hasattr(o, "to_dict") and not isinstance(o, pd.DataFrame):
        return _sanitize(o.to_dict())
    if isinstance(o, np.ndarray):
        return _sanitize(o.tolist())
    return o


def file_digest(path):
    """sha256 of a file, or ``None`` without a path."""
    if path is None:
        return None
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                h.update(chunk)
    except OSError as e:
        raise IoError("cannot read {}: {}".format(path, e)) from e
    return h.hexdigest()


def provenance(config, input_path=None):
    return {
        "version": __version__,
        "config": dict(config),
        "input_sha256": file_digest(input_path),
    }


def dumps(result, config=None, input_path=None):
    payload = {"result": result}
    if config is not None:
        payload["provenance"] = provenance(config, input_path)
    return json.dumps(payload, cls=Encoder, sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


def write_json(result, path, config=None, input_path=None):
    text = dumps(result, config, input_path)
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise IoError("cannot write {}: {}".format(path, e)) from e
    log.info("wrote %s", path)


def write_csv(frame: pd.DataFrame, path):
    try:
        frame.to_csv(path, index=False, float_format="%.10g")
    except OSError as e:
        raise IoError("cannot write {}: {}".format(path, e)) from e
    log.info("wrote %s", path)
