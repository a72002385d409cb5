"""Strict TOML configuration: parse, reject, emit, round-trip."""
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipfree.config import (
    ConfigError,
    ExperimentConfig,
    default_config,
    dumps_config,
    loads_config,
    merge_overrides,
)


def test_defaults():
    cfg = default_config()
    assert cfg.manifold == {"kind": "circle", "radius": 1.0}
    assert cfg.norm["p"] == math.inf
    assert cfg.n_list == (5, 10, 20)
    assert cfg.seed == 0
    assert cfg.out == "reports"
    assert not cfg.timings


def test_empty_document_gives_defaults():
    assert loads_config("") == default_config()


def test_round_trip_is_identity():
    cfg = ExperimentConfig(
        manifold={"kind": "torus", "R": 2.0, "r": 0.5},
        norm={"kind": "weighted-l1", "dim": 3,
              "matrix": [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]},
        n_list=(3, 7),
        seed=42,
        out="elsewhere",
        timings=True,
        slack={"gamma": 0.1},
    )
    text = dumps_config(cfg)
    back = loads_config(text)
    assert back.n_list == cfg.n_list
    assert back.seed == cfg.seed
    assert back.out == cfg.out
    assert back.timings == cfg.timings
    assert back.slack == cfg.slack
    assert back.manifold == cfg.manifold
    assert back.norm["matrix"] == cfg.norm["matrix"]
    # a second dump of the parsed config is byte-identical (canonical form)
    assert dumps_config(back) == text


def test_dump_uses_17_digit_floats():
    cfg = ExperimentConfig(manifold={"kind": "circle",
                                     "radius": 0.1 + 0.2})
    text = dumps_config(cfg)
    assert "0.30000000000000004" in text
    assert loads_config(text).manifold["radius"] == 0.1 + 0.2


def test_infinity_round_trips():
    text = dumps_config(default_config())
    assert "p = inf" in text
    assert loads_config(text).norm["p"] == math.inf


@pytest.mark.parametrize("doc,fragment", [
    ("[run]\nn_list = [5]", "n_list"),
    ("[rum]\nseed = 1", "rum"),
    ("[manifold]\nradius = 1.0", "kind"),
    ("[manifold]\nkind = 'circle'\nradios = 2.0", "radios"),
    ("[manifold]\nkind = 'klein'", "klein"),
    ("[norm]\nkind = 'pnorm'\ndim = 2\nq = 3.0", "q"),
    ("[gamma]\nhalfwidths = 0.2", "halfwidths"),
    ("[run]\nn = []", "nonempty"),
    ("[run]\nn = [1]", ">= 2"),
    ("[run]\nn = [5.0]", "integer"),
    ("[run]\nseed = true", "integer"),
    ("[run]\ntimings = 1", "boolean"),
    ("[slack]\ngamma = 'lots'", "number"),
    ("run]\nn = [5]", "parse"),
])
def test_rejects_malformed_documents(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        loads_config(doc)


def test_merge_overrides():
    cfg = default_config()
    out = merge_overrides(cfg, n_list=[3, 9], seed=7, out="x", timings=True)
    assert out.n_list == (3, 9)
    assert out.seed == 7
    assert out.out == "x"
    assert out.timings
    # untouched fields survive
    assert out.manifold == cfg.manifold
    same = merge_overrides(cfg)
    assert same == cfg


def test_merge_overrides_validates_n():
    with pytest.raises(ConfigError):
        merge_overrides(default_config(), n_list=[0])


def test_slack_lookup():
    cfg = ExperimentConfig(slack={"gamma": 0.1})
    assert cfg.slack_for("gamma", 0.05) == 0.1
    assert cfg.slack_for("glue", 0.01) == 0.01


def test_counterexample_matrix_round_trip():
    doc = """
[counterexample]
matrix = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
"""
    cfg = loads_config(doc)
    assert cfg.counterexample.matrix == ((1.0, 0.5, 0.0),
                                         (0.0, 1.0, 0.0),
                                         (0.0, 0.0, 1.0))
    assert isinstance(cfg.counterexample.matrix, tuple)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(2, 50), min_size=1, max_size=5),
       st.integers(0, 10 ** 6))
def test_run_table_round_trip(ns, seed):
    cfg = merge_overrides(default_config(), n_list=ns, seed=seed)
    back = loads_config(dumps_config(cfg))
    assert back.n_list == tuple(ns)
    assert back.seed == seed
