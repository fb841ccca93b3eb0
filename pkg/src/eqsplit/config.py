"""Run configuration: a YAML document parsed into a problem instance and solver settings.

Schema (top level)::

    problem:   kind-specific mapping, see ``build_problem``
    solver:    gamma, beta0, beta_power, betas, max_iters, tol, prox_lambda,
               inner_tol, inner_max_iters, certify
    x0:        [..] or "project-random(SEED)"
    output:    trace (path), format (csv | jsonl), trace_every, wall_time
    verify:    oracle_tol
    probe:     box {lo, hi}
    seed:      integer

Every validation error names the offending field and its line.
"""

from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .bifunctions import (
    Bifunction,
    QuadraticGame,
    SplitBifunction,
    separable_quadratic,
    vi_linear,
    zero_bifunction,
)
from .geometry import Ball, Box, ConvexSet, Halfspace, Product, Simplex, WholeSpace, as_vector
from .maps import (
    Averaged,
    Identity,
    LinearMonotone,
    MonotoneOperator,
    NonexpansiveMap,
    Projection,
    Resolvent,
    SubdifferentialOfConvexQuadratic,
)
from .problems import (
    OracleError,
    ProblemInstance,
    build_cournot,
    build_inclusion_ep,
    build_intersection_ep,
    build_sep_game,
    extragradient_oracle,
)
from .solver import SolverConfig

__all__ = [
    "ConfigError",
    "RunConfig",
    "OutputConfig",
    "load_config",
    "parse_config",
    "OUTPUT_DIR_ENV",
    "PROBLEM_KINDS",
]

OUTPUT_DIR_ENV = "EQSPLIT_OUTPUT_DIR"
PROBLEM_KINDS = ("cournot", "intersection_ep", "inclusion_ep", "sep_game", "custom")
_RANDOM_X0 = re.compile(r"^project-random\((-?\d+)\)$")


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None, source: str = "<config>"):
        self.message = message
        self.path = path
        self.line = line
        self.source = source
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {path}: {message}" if path else f"{where}: {message}")


def _line_map(text: str) -> dict:
    """Map dotted field paths to 1-based line numbers."""
    lines: dict[str, int] = {}

    def walk(node, path):
        lines.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                sub = f"{path}.{key.value}" if path else str(key.value)
                lines[sub] = key.start_mark.line + 1
                walk(value, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, value in enumerate(node.value):
                walk(value, f"{path}[{i}]")

    root = yaml.compose(text)
    if root is not None:
        walk(root, "")
    return lines


class _Node:
    """A mapping from the config plus its location, for anchored errors."""

    def __init__(self, data, path: str, ctx: "_Context"):
        self.data = data
        self.path = path
        self.ctx = ctx

    def error(self, message: str, key: str | None = None) -> ConfigError:
        path = self.sub(key) if key is not None else self.path
        return self.ctx.error(message, path)

    def sub(self, key) -> str:
        if isinstance(key, int):
            return f"{self.path}[{key}]"
        return f"{self.path}.{key}" if self.path else key

    def has(self, key) -> bool:
        return isinstance(self.data, dict) and key in self.data

    def mapping(self, key, required=True) -> "_Node | None":
        if not self.has(key):
            if required:
                raise self.error("missing required section", key)
            return None
        value = self.data[key]
        if not isinstance(value, dict):
            raise self.error("expected a mapping", key)
        return _Node(value, self.sub(key), self.ctx)

    def items(self, key, required=True) -> list:
        if not self.has(key):
            if required:
                raise self.error("missing required field", key)
            return []
        value = self.data[key]
        if not isinstance(value, list):
            raise self.error("expected a list", key)
        return [_Node(v, f"{self.sub(key)}[{i}]", self.ctx) for i, v in enumerate(value)]

    def get(self, key, kind, default=dataclasses.MISSING):
        if not self.has(key):
            if default is dataclasses.MISSING:
                raise self.error("missing required field", key)
            return default
        value = self.data[key]
        try:
            return _coerce(value, kind)
        except (TypeError, ValueError) as err:
            raise self.error(str(err), key) from None


def _coerce(value, kind):
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ValueError(f"expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"expected true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ValueError(f"expected a string, got {value!r}")
        return value
    if kind == "vector":
        return as_vector(value, name="value")
    if kind == "matrix":
        m = np.array(value, dtype=np.float64)
        if m.ndim != 2 or not np.all(np.isfinite(m)):
            raise ValueError("expected a finite matrix (list of rows)")
        return m
    if kind == "array":
        m = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(m)):
            raise ValueError("expected finite numbers")
        return m
    raise AssertionError(kind)


@dataclass
class _Context:
    lines: dict
    source: str

    def error(self, message, path) -> ConfigError:
        line = self.lines.get(path)
        probe = path
        while line is None and probe:
            probe = re.sub(r"(\.[^.\[]+|\[\d+\])$", "", probe)
            if probe == path:
                break
            line = self.lines.get(probe)
        return ConfigError(message, path, line, self.source)


@dataclass(frozen=True)
class OutputConfig:
    trace: Path
    format: str = "csv"
    wall_time: bool = False

    @property
    def summary(self) -> Path:
        return self.trace.with_suffix(".summary.json")

    @property
    def report(self) -> Path:
        return self.trace.with_suffix(".verify.json")


@dataclass(frozen=True, eq=False)
class RunConfig:
    problem: ProblemInstance
    solver: SolverConfig
    x0: np.ndarray
    output: OutputConfig
    seed: int
    oracle_tol: float
    probe_box: Box | None
    source: str
    raw: dict


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config: {err.strerror or err}", source=str(path)) from None
    return parse_config(text, source=str(path), overrides=overrides)


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> RunConfig:
    """Parse and validate a configuration document.

    ``overrides`` maps dotted paths (``"solver.gamma"``) to values that
    replace the document's; command-line flags arrive this way.
    """
    try:
        data = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"invalid YAML: {getattr(err, 'problem', err)}", line=line, source=source) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source=source)
    for dotted, value in (overrides or {}).items():
        node = data
        *parents, last = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[last] = value
        lines[dotted] = None
    ctx = _Context(lines, source)
    root = _Node(data, "", ctx)
    unknown = set(data) - {"problem", "solver", "x0", "output", "verify", "probe", "seed"}
    if unknown:
        raise root.error(f"unknown top-level field {sorted(unknown)[0]!r}", sorted(unknown)[0])

    seed = root.get("seed", "int", 0)
    problem = build_problem(root.mapping("problem"))
    solver = _solver_config(root.mapping("solver", required=False), root, seed)
    x0 = _initial_point(root, problem)
    output = _output_config(root.mapping("output", required=False), root, source)
    verify = root.mapping("verify", required=False)
    oracle_tol = verify.get("oracle_tol", "float", 1e-3) if verify else 1e-3
    probe = root.mapping("probe", required=False)
    probe_box = None
    if probe is not None and probe.has("box"):
        probe_box = _set_spec(probe.mapping("box"), problem.dim, default_type="box")
    return RunConfig(problem, solver, x0, output, seed, oracle_tol, probe_box, source, data)


_SOLVER_FIELDS = {
    "gamma": "float",
    "beta0": "float",
    "beta_power": "float",
    "betas": "vector",
    "max_iters": "int",
    "tol": "float",
    "prox_lambda": "float",
    "inner_tol": "float",
    "inner_max_iters": "int",
    "certify": "bool",
}


def _solver_config(node, root, seed) -> SolverConfig:
    kwargs: dict[str, Any] = {"seed": seed}
    if node is not None:
        for key in node.data:
            if key not in _SOLVER_FIELDS:
                raise node.error("unknown solver field", key)
            value = node.get(key, _SOLVER_FIELDS[key])
            kwargs[key] = tuple(value) if key == "betas" else value
    out = root.mapping("output", required=False)
    if out is not None:
        kwargs["trace_every"] = out.get("trace_every", "int", 1)
        kwargs["record_wall_time"] = out.get("wall_time", "bool", False)
    try:
        return SolverConfig(**kwargs)
    except ValueError as err:
        msg = str(err)
        first = msg.split()[0]
        field = {"explicit": "betas"}.get(first, first)
        section = "output" if field == "trace_every" else "solver"
        raise root.ctx.error(msg, f"{section}.{field}") from None


def _output_config(node, root, source) -> OutputConfig:
    fmt = "csv"
    trace = None
    wall = False
    if node is not None:
        for key in node.data:
            if key not in ("trace", "format", "trace_every", "wall_time"):
                raise node.error("unknown output field", key)
        fmt = node.get("format", "str", "csv")
        if fmt in ("json-lines", "jsonl"):
            fmt = "jsonl"
        elif fmt != "csv":
            raise node.error("format must be 'csv' or 'json-lines'", "format")
        trace = node.get("trace", "str", None)
        wall = node.get("wall_time", "bool", False)
    ext = ".csv" if fmt == "csv" else ".jsonl"
    if trace is None:
        base = Path(os.environ.get(OUTPUT_DIR_ENV, "eqsplit-out"))
        trace_path = base / (Path(source).stem + ext)
    else:
        trace_path = Path(trace)
    return OutputConfig(trace_path, fmt, wall)


def _initial_point(root, problem) -> np.ndarray:
    n = problem.dim
    seed = root.get("seed", "int", 0)
    raw = root.data.get("x0", f"project-random({seed})")
    if isinstance(raw, str):
        m = _RANDOM_X0.match(raw.strip())
        if not m:
            raise root.error("x0 must be a vector or 'project-random(SEED)'", "x0")
        rng = np.random.default_rng(int(m.group(1)))
        box = problem.C.bounding_box()
        if box is None:
            box = Box.uniform(-1.0, 1.0, n)
        return problem.C.project(rng.uniform(box.lo, box.hi))
    x0 = root.get("x0", "vector")
    if x0.shape[0] != n:
        raise root.error(f"x0 has dimension {x0.shape[0]}, problem has {n}", "x0")
    return x0


# --- problem section -------------------------------------------------------


def _vec(node, key, n=None, default=dataclasses.MISSING):
    v = node.get(key, "vector", default)
    if v is None or v is default:
        return v
    if n is not None:
        if v.shape[0] == 1 and n > 1:
            v = np.full(n, v[0])
        elif v.shape[0] != n:
            raise node.error(f"expected dimension {n}, got {v.shape[0]}", key)
    return v


def _set_spec(node, n: int | None, default_type: str | None = None) -> ConvexSet:
    kind = node.get("type", "str", default_type)
    try:
        if kind == "box":
            lo = node.get("lo", "array")
            hi = node.get("hi", "array")
            dim = node.get("dim", "int", n)
            if lo.ndim == 0 and hi.ndim == 0:
                if dim is None:
                    raise node.error("scalar bounds need 'dim'")
                return Box.uniform(float(lo), float(hi), dim)
            m = max(lo.size, hi.size)
            return Box(np.broadcast_to(lo, (m,)), np.broadcast_to(hi, (m,)))
        if kind == "ball":
            return Ball(_vec(node, "center"), node.get("radius", "float"))
        if kind == "halfspace":
            return Halfspace(_vec(node, "a"), node.get("b", "float"))
        if kind == "simplex":
            return Simplex(node.get("scale", "float", 1.0), node.get("dim", "int", n))
        if kind == "product":
            return Product(tuple(_set_spec(b, None) for b in node.items("blocks")))
        if kind in ("whole", "whole_space"):
            dim = node.get("dim", "int", n)
            if dim is None:
                raise node.error("whole space needs 'dim'")
            return WholeSpace(dim)
    except ConfigError:
        raise
    except ValueError as err:
        raise node.error(str(err)) from None
    raise node.error(f"unknown set type {kind!r}", "type")


def _operator_spec(node) -> MonotoneOperator:
    kind = node.get("type", "str", "linear")
    try:
        if kind == "linear":
            return LinearMonotone(node.get("M", "matrix"), _vec(node, "q", default=None))
        if kind == "quadratic":
            return SubdifferentialOfConvexQuadratic(node.get("Q", "matrix"), _vec(node, "q", default=None))
        if kind == "distance":
            return SubdifferentialOfConvexQuadratic.distance_to(_vec(node, "point"))
    except ValueError as err:
        raise node.error(str(err)) from None
    raise node.error(f"unknown operator type {kind!r}", "type")


def _map_spec(node, n: int) -> NonexpansiveMap:
    kind = node.get("type", "str")
    try:
        if kind == "identity":
            return Identity(node.get("dim", "int", n))
        if kind == "projection":
            return Projection(_set_spec(node.mapping("set"), n))
        if kind == "averaged":
            maps = tuple(_map_spec(m, n) for m in node.items("maps"))
            w = _vec(node, "weights", default=None)
            if w is None:
                return Averaged.uniform(maps)
            return Averaged(w, maps)
        if kind == "resolvent":
            return Resolvent(_operator_spec(node.mapping("operator")), node.get("c", "float", 1.0))
    except ConfigError:
        raise
    except ValueError as err:
        raise node.error(str(err)) from None
    raise node.error(f"unknown map type {kind!r}", "type")


def _bifunction_spec(node, n: int) -> Bifunction:
    if node is None:
        return zero_bifunction(n)
    kind = node.get("type", "str")
    try:
        if kind == "zero":
            return zero_bifunction(n)
        if kind == "vi_linear":
            M = node.get("M", "array")
            if M.ndim == 0:
                M = float(M) * np.eye(n)
            return vi_linear(M, _vec(node, "q", n, default=None))
        if kind == "separable_quadratic":
            L = node.get("L", "array", np.zeros((n, n)))
            if L.ndim == 0:
                L = float(L) * np.eye(n)
            return separable_quadratic(_vec(node, "q", n), L, _vec(node, "offset", n, default=None))
    except ValueError as err:
        raise node.error(str(err)) from None
    raise node.error(f"unknown bifunction type {kind!r}", "type")


def _split(node, n) -> SplitBifunction:
    f1 = _bifunction_spec(node.mapping("f1", required=False), n)
    f2 = _bifunction_spec(node.mapping("f2", required=False), n)
    for key, f in (("f1", f1), ("f2", f2)):
        if getattr(f, "dim", n) != n:
            raise node.error(f"bifunction has dimension {f.dim}, problem has {n}", key)
    return SplitBifunction(f1, f2)


def _game(node) -> tuple[QuadraticGame, Box, str]:
    c = _vec(node, "c")
    n = c.shape[0]
    try:
        game = QuadraticGame(node.get("a", "array"), node.get("b", "array"), c)
    except ValueError as err:
        raise node.error(str(err), "b") from None
    box_node = node.mapping("box", required=False)
    box = _set_spec(box_node, n, "box") if box_node else Box.uniform(0.0, float(np.max(game.a)), n)
    if not isinstance(box, Box) or box.dim != n:
        raise node.error(f"box must be a {n}-dimensional box", "box")
    split = node.get("split", "str", "revenue-cost")
    if split not in ("revenue-cost", "lumped"):
        raise node.error("split must be 'revenue-cost' or 'lumped'", "split")
    return game, box, split


def _dimension(node) -> int:
    if node.has("dim"):
        return node.get("dim", "int")
    for key in ("sets", "operators"):
        for item in node.items(key, required=False):
            return _set_spec(item, None).dim if key == "sets" else _operator_spec(item).dim
    if node.has("C"):
        return _set_spec(node.mapping("C"), None).dim
    raise node.error("cannot infer the dimension; add 'dim'")


def build_problem(node: _Node) -> ProblemInstance:
    """Build the instance described by the ``problem`` section.

    Kinds and their fields:

    * ``cournot``: a, b (scalar or matrix), c, box {lo, hi}, split, oracle (bool)
    * ``sep_game``: as cournot plus constraints [{a, b}], weights
    * ``intersection_ep``: f1, f2, sets [...], weights, C, oracle (vector or "extragradient")
    * ``inclusion_ep``: f1, f2, operators [...], c, weights, C, oracle (vector or "linear")
    * ``custom``: f1, f2, C, T, oracle (vector)

    Bifunctions are ``{type: zero | vi_linear | separable_quadratic}``; an
    omitted f1 or f2 is zero.
    """
    kind = node.get("kind", "str")
    if kind not in PROBLEM_KINDS:
        raise node.error(f"unknown problem kind {kind!r}; expected one of {', '.join(PROBLEM_KINDS)}", "kind")
    name = node.get("name", "str", kind)
    try:
        if kind in ("cournot", "sep_game"):
            game, box, split = _game(node)
            want_oracle = node.get("oracle", "bool", True)
            if kind == "cournot":
                inst = build_cournot(game, box, split, want_oracle, name)
            else:
                cons = [(_vec(c, "a", game.n), c.get("b", "float")) for c in node.items("constraints", required=False)]
                weights = _weights(node)
                inst = build_sep_game(game, box, cons, weights, split, want_oracle, name)
            return dataclasses.replace(inst, spec=node.data)

        if kind == "custom" and not node.has("C"):
            raise node.error("custom problems need 'C'", "C")
        n = _dimension(node)
        split = _split(node, n)
        C = _set_spec(node.mapping("C"), n) if node.has("C") else None
        weights = _weights(node)
        oracle_raw = node.data.get("oracle")
        if kind == "intersection_ep":
            sets = [_set_spec(s, n) for s in node.items("sets")]
            inst = build_intersection_ep(split, sets, weights, C, None, name)
            oracle, prov = _oracle(node, oracle_raw, n, "extragradient", lambda: _eg_oracle(split, sets, n))
        elif kind == "inclusion_ep":
            ops = [_operator_spec(o) for o in node.items("operators")]
            inst = build_inclusion_ep(split, ops, node.get("c", "float", 1.0), weights, C, None, name)
            oracle, prov = _oracle(node, oracle_raw, n, "linear", lambda: _linear_oracle(split, ops))
        else:
            T = _map_spec(node.mapping("T"), n)
            inst = ProblemInstance(split, C, T, None, name)
            oracle, prov = _oracle(node, oracle_raw, n, None, None)
        return dataclasses.replace(inst, oracle_solution=oracle, oracle_provenance=prov, spec=node.data)
    except ConfigError:
        raise
    except (ValueError, OracleError) as err:
        raise node.error(str(err)) from None


def _weights(node):
    w = _vec(node, "weights", default=None)
    if w is not None:
        if np.any(w <= 0):
            raise node.error("averaging weights must be strictly positive", "weights")
        if abs(w.sum() - 1.0) > 1e-12:
            raise node.error(f"averaging weights must sum to 1, got {w.sum()!r}", "weights")
    return w


def _oracle(node, raw, n, keyword, compute):
    if raw is None:
        return None, ""
    if keyword is not None and raw == keyword:
        return compute(), keyword
    v = _vec(node, "oracle", n)
    return v, "supplied"


def _eg_oracle(split, sets, n):
    f = split.combined()
    lip = getattr(f, "L", None)
    step = 0.5 / max(1.0, float(np.linalg.norm(lip, 2))) if lip is not None else 0.1
    return extragradient_oracle(f.diag_subgrad, sets, np.zeros(n), step)


def _linear_oracle(split, ops):
    f = split.combined()
    if getattr(f, "L", None) is None or np.any(f.q != 0):
        raise ValueError("the 'linear' oracle needs vi_linear bifunctions")
    # on the whole space the equilibria of <Mx + q, y - x> are the zeros of Mx + q
    M = np.vstack([op.M for op in ops] + [f.L])
    q = np.concatenate([op.q for op in ops] + [f.offset])
    x, *_ = np.linalg.lstsq(M, -q, rcond=None)
    resid = float(np.abs(M @ x + q).max())
    if resid > 1e-10 * (1.0 + float(np.abs(q).max())):
        raise OracleError(f"no common zero: stacked residual {resid:.3e}")
    return x
