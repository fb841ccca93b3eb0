import textwrap

import numpy as np
import pytest

from eqsplit.config import ConfigError, load_config, parse_config
from eqsplit.geometry import Box, Simplex
from eqsplit.maps import Averaged, Identity, Resolvent

COURNOT = textwrap.dedent(
    """\
    seed: 4
    problem:
      kind: cournot
      a: 10
      b: 1
      c: [1, 1]
      box: {lo: 0, hi: 10}
    solver:
      gamma: 0.5
      max_iters: 100
    x0: [0, 0]
    output:
      trace: out/run.csv
    """
)


def errmsg(text, **kw):
    with pytest.raises(ConfigError) as info:
        parse_config(text, source="cfg.yaml", **kw)
    return str(info.value)


def test_cournot_config():
    cfg = parse_config(COURNOT)
    assert cfg.seed == 4 and cfg.solver.seed == 4
    assert cfg.solver.max_iters == 100
    np.testing.assert_allclose(cfg.problem.oracle_solution, [3, 3], atol=1e-10)
    assert isinstance(cfg.problem.T, Identity)
    assert str(cfg.output.trace) == "out/run.csv"
    assert str(cfg.output.summary) == "out/run.summary.json"


def test_errors_name_field_and_line():
    assert errmsg(COURNOT.replace("gamma: 0.5", "gamma: 1.5")) == (
        "cfg.yaml:9: solver.gamma: gamma must lie strictly inside (0,1)"
    )
    assert errmsg(COURNOT.replace("kind: cournot", "kind: potluck")).startswith(
        "cfg.yaml:3: problem.kind: unknown problem kind 'potluck'"
    )
    assert errmsg(COURNOT.replace("max_iters: 100", "max_iters: lots")).startswith(
        "cfg.yaml:10: solver.max_iters: expected an integer"
    )
    assert errmsg(COURNOT.replace("x0: [0, 0]", "x0: [0, 0, 0]")).startswith("cfg.yaml:11: x0: x0 has dimension 3")
    assert "cfg.yaml:10: solver.speed: unknown solver field" in errmsg(COURNOT.replace("max_iters: 100", "speed: 100"))
    assert errmsg(COURNOT + "colour: blue\n").startswith("cfg.yaml:14: colour: unknown top-level field")


def test_missing_sections_and_bad_yaml():
    assert "problem: missing required section" in errmsg("seed: 1\n")
    assert "invalid YAML" in errmsg("problem: [\n")
    assert "top level must be a mapping" in errmsg("- 1\n")
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config("/nonexistent/config.yaml")


def test_overrides_take_precedence():
    cfg = parse_config(COURNOT, overrides={"solver.gamma": 0.25, "seed": 9, "solver.tol": 1e-3})
    assert cfg.solver.gamma == 0.25 and cfg.seed == 9 and cfg.solver.tol == 1e-3
    msg = errmsg(COURNOT, overrides={"solver.gamma": 2.0})
    assert "solver.gamma: gamma must lie strictly inside (0,1)" in msg


def test_project_random_x0_is_seeded_and_feasible():
    text = COURNOT.replace("x0: [0, 0]", "x0: project-random(7)")
    a, b = parse_config(text), parse_config(text)
    np.testing.assert_array_equal(a.x0, b.x0)
    assert Box.uniform(0, 10, 2).contains(a.x0)
    assert "project-random" in errmsg(COURNOT.replace("x0: [0, 0]", "x0: anywhere"))


def test_default_trace_path_uses_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("EQSPLIT_OUTPUT_DIR", str(tmp_path))
    text = COURNOT.replace("output:\n  trace: out/run.csv\n", "")
    cfg = parse_config(text, source="configs/demo.yaml")
    assert cfg.output.trace == tmp_path / "demo.csv"
    jl = parse_config(text + "output:\n  format: json-lines\n", source="demo.yaml")
    assert jl.output.format == "jsonl" and jl.output.trace.suffix == ".jsonl"
    assert "format must be" in errmsg(text + "output:\n  format: xml\n")


def test_sep_game_config():
    text = COURNOT.replace("kind: cournot", "kind: sep_game") .replace(
        "  box: {lo: 0, hi: 10}\n", "  box: {lo: 0, hi: 10}\n  constraints:\n    - {a: [1, 1], b: 4}\n"
    )
    cfg = parse_config(text)
    assert isinstance(cfg.problem.T, Averaged)
    np.testing.assert_allclose(cfg.problem.oracle_solution, [2, 2], atol=1e-10)


def test_intersection_inclusion_and_custom_configs():
    inter = textwrap.dedent(
        """\
        problem:
          kind: intersection_ep
          f1: {type: vi_linear, M: 1}
          sets:
            - {type: ball, center: [2, 0], radius: 1}
            - {type: halfspace, a: [1, 0], b: 1.5}
          oracle: extragradient
        x0: [3, 1]
        """
    )
    cfg = parse_config(inter)
    np.testing.assert_allclose(cfg.problem.oracle_solution, [1, 0], atol=1e-10)
    assert cfg.problem.oracle_provenance == "extragradient"

    incl = textwrap.dedent(
        """\
        problem:
          kind: inclusion_ep
          operators:
            - {type: linear, M: [[1, 1, 0], [-1, 1, 0], [0, 0, 0]]}
          f1: {type: vi_linear, M: [[1, 0, 0], [0, 1, 0], [0, 0, 1]], q: [0, 0, -2]}
          oracle: linear
        x0: [1, 1, 1]
        """
    )
    cfg = parse_config(incl)
    assert isinstance(cfg.problem.T.maps[0], Resolvent)
    np.testing.assert_allclose(cfg.problem.oracle_solution, [0, 0, 2], atol=1e-12)

    custom = textwrap.dedent(
        """\
        problem:
          kind: custom
          C: {type: simplex, scale: 1, dim: 3}
          T: {type: averaged, maps: [{type: identity}, {type: projection, set: {type: box, lo: 0, hi: 0.5}}]}
        x0: [0.2, 0.3, 0.5]
        """
    )
    cfg = parse_config(custom)
    assert isinstance(cfg.problem.C, Simplex) and isinstance(cfg.problem.T, Averaged)


def test_problem_errors_are_anchored():
    bad_set = textwrap.dedent(
        """\
        problem:
          kind: intersection_ep
          sets:
            - {type: ball, center: [0, 0], radius: 1}
            - {type: doughnut}
        """
    )
    assert errmsg(bad_set).startswith("cfg.yaml:5: problem.sets[1].type: unknown set type 'doughnut'")
    bad_weights = bad_set.replace("{type: doughnut}", "{type: ball, center: [0, 0], radius: 2}") + "  weights: [0.5, 0.6]\n"
    assert errmsg(bad_weights).startswith("cfg.yaml:6: problem.weights: averaging weights must sum to 1")
    missing = "problem:\n  kind: custom\n  T: {type: identity}\n"
    assert "custom problems need 'C'" in errmsg(missing)
    assert "split must be" in errmsg(COURNOT.replace("c: [1, 1]", "c: [1, 1]\n  split: thirds"))
    mono = "problem:\n  kind: inclusion_ep\n  operators:\n    - {type: linear, M: [[-1]]}\n"
    assert errmsg(mono).startswith("cfg.yaml:4: problem.operators[0]: operator is not monotone")
