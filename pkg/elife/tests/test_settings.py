import json

import pytest

from ..settings import (
    ArgumentError,
    build,
    DEFAULTS,
)


def flags(command, **values):
    out = {"command": command}
    out.update(values)
    return out


def test_defaults_fill_gaps():
    config = build(flags("npmle", data="x.csv"))
    assert config.thresh == DEFAULTS["thresh"]
    assert config.level == 0.95
    assert config.scheme == "none"
    assert config.params is None


def test_parameter_flags_collected():
    config = build(flags("sample", family="gomp", n=10, seed=1, scale=2.0,
                         beta=0.1))
    assert config.params == {"scale": 2.0, "beta": 0.1}


@pytest.mark.parametrize(("pairs", "expected"), (
    (["time=age"], {"time": "age"}),
    (["time=age", "weight=n"], {"time": "age", "weight": "n"}),
))
def test_column_mappings(pairs, expected):
    assert build(flags("npmle", data="x.csv", columns=pairs)).columns == \
        expected


@pytest.mark.parametrize(("pair",), (("time",), ("=age",), ("time=",)))
def test_bad_column_mapping(pair):
    with pytest.raises(ArgumentError):
        build(flags("npmle", data="x.csv", columns=[pair]))


@pytest.mark.parametrize(("values", "message"), (
    (flags("fit", data="x.csv"), "needs --family"),
    (flags("hazard", data="x.csv", family="exp"), "needs --times"),
    (flags("boot-lrt", data="x.csv", null="exp", alt=["gp"]), "--seed"),
    (flags("npmle", data="x.csv", level=1.0), "--level"),
    (flags("npmle", data="x.csv", jobs=0), "--jobs"),
    (flags("plot"), "Unknown command"),
))
def test_invalid_configurations(values, message):
    with pytest.raises(ArgumentError) as exc:
        build(values)
    assert message in str(exc.value)


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"data": "a.csv", "thresh": 100,
                                "level": 0.9}))
    config = build(flags("npmle", thresh=108.0), str(path))
    assert config.data == "a.csv"
    assert config.thresh == 108.0
    assert config.level == 0.9


def test_config_file_errors(tmp_path):
    with pytest.raises(ArgumentError):
        build(flags("npmle"), str(tmp_path / "absent.json"))
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"data": "a.csv", "colour": "red"}))
    with pytest.raises(ArgumentError) as exc:
        build(flags("npmle"), str(path))
    assert "colour" in str(exc.value)
    path.write_text("[1, 2]")
    with pytest.raises(ArgumentError):
        build(flags("npmle"), str(path))
