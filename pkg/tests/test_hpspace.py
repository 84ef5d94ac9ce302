import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqtune import rng as rngmod
from seqtune.hpspace import (
    ConfigSpace,
    Configuration,
    DomainError,
    ParamSpec,
    Subspace,
    restrict,
    subspace_from_descriptor,
)


def make_space():
    return ConfigSpace(
        [
            ParamSpec("lr", "continuous-log", 1e-4, 1e-1),
            ParamSpec("wd", "continuous-linear", 0.0, 1.0),
            ParamSpec("mem", "integer", 16, 512),
            ParamSpec("opt", "categorical", choices=("a", "b", "c", "d")),
        ]
    )


def test_encode_log_bounds():
    p = ParamSpec("lr", "continuous-log", 1e-4, 1e-1)
    assert p.encode(1e-4) == 0.0
    assert p.encode(1e-1) == 1.0


def test_encode_categorical_bin_midpoint():
    p = ParamSpec("c", "categorical", choices=("a", "b", "c", "d"))
    assert p.encode("b") == 0.375


def test_encode_integer_bin_midpoint():
    p = ParamSpec("n", "integer", 0, 9)
    assert p.encode(0) == 0.05
    assert p.encode(9) == 0.95


def test_encode_outside_domain_names_parameter():
    p = ParamSpec("wd", "continuous-linear", 0.0, 1.0)
    with pytest.raises(DomainError, match="wd"):
        p.encode(1.5)


def test_spec_validation_errors():
    with pytest.raises(DomainError):
        ParamSpec("", "continuous-linear", 0, 1)
    with pytest.raises(DomainError):
        ParamSpec("x", "continuous-linear", 1.0, 1.0)
    with pytest.raises(DomainError):
        ParamSpec("x", "continuous-log", 0.0, 1.0)
    with pytest.raises(DomainError):
        ParamSpec("x", "categorical", choices=("only",))
    with pytest.raises(DomainError):
        ParamSpec("x", "nope", 0, 1)
    with pytest.raises(DomainError):
        ConfigSpace([])
    with pytest.raises(DomainError):
        ConfigSpace([ParamSpec("x", "integer", 0, 3)] * 2)


@settings(max_examples=200)
@given(st.floats(min_value=1e-4, max_value=1e-1))
def test_log_round_trip_within_1e12_relative(v):
    p = ParamSpec("lr", "continuous-log", 1e-4, 1e-1)
    back = p.decode(p.encode(v))
    assert abs(back - v) <= 1e-12 * abs(v)


@settings(max_examples=200)
@given(st.floats(min_value=-3.0, max_value=7.5))
def test_linear_round_trip_within_1e12_relative(v):
    p = ParamSpec("x", "continuous-linear", -3.0, 7.5)
    back = p.decode(p.encode(v))
    assert abs(back - v) <= 1e-12 * max(abs(v), 1.0)


@given(st.integers(min_value=16, max_value=512))
def test_integer_round_trip_exact(v):
    p = ParamSpec("mem", "integer", 16, 512)
    assert p.decode(p.encode(v)) == v


def test_categorical_round_trip_exact():
    p = ParamSpec("c", "categorical", choices=("a", "b", "c", "d"))
    for c in p.choices:
        assert p.decode(p.encode(c)) == c


def test_degenerate_integer_always_single_value():
    space = ConfigSpace([ParamSpec("k", "integer", 3, 3)])
    g = rngmod.derive(1, "deg")
    assert all(space.sample_uniform(g).values["k"] == 3 for _ in range(50))
    # Continuous single-point ranges stay illegal.
    with pytest.raises(DomainError):
        ParamSpec("k", "continuous-linear", 3.0, 3.0)


def test_sample_uniform_deterministic_and_valid():
    space = make_space()
    a = space.sample_uniform(rngmod.derive(11, "s"))
    b = space.sample_uniform(rngmod.derive(11, "s"))
    assert a == b
    space.validate(a)
    c = space.sample_uniform(rngmod.derive(12, "s"))
    assert a != c


def test_log_uniform_median_simulation():
    # log-uniform on [1e-4, 1e-1] has median 10**((-4 - 1) / 2) = 3.16e-3
    p = ParamSpec("lr", "continuous-log", 1e-4, 1e-1)
    space = ConfigSpace([p])
    g = rngmod.derive(123, "median")
    draws = [space.sample_uniform(g).values["lr"] for _ in range(10000)]
    med = float(np.median(draws))
    assert 2.8e-3 <= med <= 3.6e-3


def test_restrict_orders_by_value():
    space = ConfigSpace(
        [
            ParamSpec("lr", "continuous-log", 1e-4, 1e-1),
            ParamSpec("wd", "continuous-linear", 0.0, 1.0),
            ParamSpec("mem", "integer", 16, 512),
        ]
    )
    anchor = Configuration({"lr": 1e-2, "wd": 0.5, "mem": 64})
    sub = restrict(space, {"lr": 0.7, "wd": 0.05, "mem": 0.2}, 2, anchor)
    assert sub.free == {"lr", "mem"}
    assert sub.anchor == anchor


def test_restrict_tie_breaks_by_declaration_order():
    space = make_space()
    anchor = Configuration({"lr": 1e-2, "wd": 0.5, "mem": 64, "opt": "a"})
    sub = restrict(space, {n: 0.25 for n in space.names}, 1, anchor)
    assert sub.free == {"lr"}


def test_restrict_clamps_and_warns():
    space = ConfigSpace(
        [
            ParamSpec("lr", "continuous-log", 1e-4, 1e-1),
            ParamSpec("wd", "continuous-linear", 0.0, 1.0),
            ParamSpec("mem", "integer", 16, 512),
        ]
    )
    anchor = Configuration({"lr": 1e-2, "wd": 0.5, "mem": 64})
    sink = []
    sub = restrict(space, {"lr": 0.5, "wd": 0.3, "mem": 0.2}, 5, anchor, warning_sink=sink)
    assert sub.free == set(space.names)
    assert len(sink) == 1 and "clamp" in sink[0]


def test_restrict_scale_invariant():
    space = make_space()
    anchor = Configuration({"lr": 1e-2, "wd": 0.5, "mem": 64, "opt": "c"})
    imp = {"lr": 0.6, "wd": 0.1, "mem": 0.25, "opt": 0.05}
    base = restrict(space, imp, 2, anchor)
    for c in (1e-6, 0.5, 3.0, 1e8):
        scaled = restrict(space, {k: v * c for k, v in imp.items()}, 2, anchor)
        assert scaled.free == base.free


def test_restrict_requires_full_coverage():
    space = make_space()
    anchor = Configuration({"lr": 1e-2, "wd": 0.5, "mem": 64, "opt": "a"})
    with pytest.raises(DomainError, match="missing"):
        restrict(space, {"lr": 1.0}, 1, anchor)


def test_subspace_sampling_pins_anchor_values():
    space = make_space()
    anchor = Configuration({"lr": 1e-2, "wd": 0.5, "mem": 64, "opt": "c"})
    sub = Subspace(space, {"lr", "mem"}, anchor)
    g = rngmod.derive(5, "sub")
    for _ in range(20):
        cfg = sub.sample_uniform(g)
        assert cfg.values["wd"] == 0.5
        assert cfg.values["opt"] == "c"
        space.validate(cfg)


def test_json_round_trip_lossless():
    space = make_space()
    back = ConfigSpace.from_json(space.to_json())
    assert back == space
    assert json.loads(back.to_json()) == json.loads(space.to_json())


def test_subspace_descriptor_round_trip():
    space = make_space()
    anchor = Configuration({"lr": 1e-2, "wd": 0.5, "mem": 64, "opt": "c"})
    sub = Subspace(space, {"lr", "opt"}, anchor)
    back = subspace_from_descriptor(json.loads(json.dumps(sub.descriptor())))
    assert isinstance(back, Subspace)
    assert back.free == sub.free
    assert back.anchor.values == dict(anchor.values)


def test_configuration_validation():
    space = make_space()
    with pytest.raises(DomainError, match="missing"):
        space.validate(Configuration({"lr": 1e-2}))
    with pytest.raises(DomainError, match="unknown"):
        space.validate(
            Configuration(
                {"lr": 1e-2, "wd": 0.5, "mem": 64, "opt": "a", "zz": 1}
            )
        )
    with pytest.raises(DomainError, match="mem"):
        space.validate(
            Configuration({"lr": 1e-2, "wd": 0.5, "mem": 64.5, "opt": "a"})
        )
