"""Scenario files: validation, task execution and report rendering.

A scenario is a JSON object with ``schema: 1`` describing one task. See
the README for the full format. ``run`` returns a :class:`Report`; any
validation problem is raised as :class:`ScenarioError` listing every
failing field path.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import DimensionError, ExprSyntaxError, OrbitShiftError
from .field_dsl import ScalarFieldSpec, VectorFieldSpec
from .flows import FlowConfig
from .foliation import (
    LeafMapSpec,
    ProductFoliationSpec,
    RetrievedShiftFunction,
    decompose_product,
    decompose_translation,
    product_shift_spec,
    sample_grid,
    translation_shift_spec,
)
from .linalg_core import det, verify_product_char_identity
from .shift_engine import (
    ShiftSpec,
    apply_shift,
    build_commutator,
    classify_point,
    lambda_functional,
)

TASKS = ("apply", "lambda", "classify", "grid", "verify-identities", "commutator", "decompose")
MAX_GRID_POINTS = 10**6
IDENTITY_REL_TOL = 1e-9

_FIELD_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["zero", "translation", "linear", "expression"]},
        "direction": {"type": "array", "items": {"type": "number"}},
        "matrix": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "components": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["schema", "dim", "task"],
    "properties": {
        "schema": {"const": 1},
        "dim": {"type": "integer", "minimum": 1},
        "task": {"enum": list(TASKS)},
        "stages": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["field", "func"],
                "properties": {"field": _FIELD_SCHEMA, "func": {"type": "string"}},
                "additionalProperties": False,
            },
        },
        "points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "grid": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["min", "max", "count"],
                "properties": {
                    "min": {"type": "number"},
                    "max": {"type": "number"},
                    "count": {"type": "integer", "minimum": 1},
                },
                "additionalProperties": False,
            },
        },
        "flow": {
            "type": "object",
            "properties": {
                "method": {"enum": ["exact_if_possible", "rk4"]},
                "step": {"type": "number", "exclusiveMinimum": 0},
                "max_time": {"type": "number", "exclusiveMinimum": 0},
                "radius": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "oracle": {"type": "boolean"},
        "format": {"enum": ["json", "csv"]},
        "pairs": {"type": "integer", "minimum": 1},
        "rank_deficient": {"type": "integer", "minimum": 0},
        "max_dim": {"type": "integer", "minimum": 1, "maximum": 64},
        "map": {"type": "array", "items": {"type": "string"}},
        "leaf_dim": {"type": "integer", "minimum": 1},
        "foliation": {
            "type": "object",
            "required": ["blocks"],
            "properties": {
                "blocks": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["dim"],
                        "properties": {"dim": {"type": "integer", "minimum": 0}, "field": _FIELD_SCHEMA},
                        "additionalProperties": False,
                    },
                }
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ScenarioError(OrbitShiftError):
    """Validation failure; ``errors`` is a list of ``(path, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors))


@dataclass
class Report:
    task: str
    dim: int
    columns: list
    records: list
    summary: dict = field(default_factory=dict)
    ok: bool = True

    def to_json(self) -> str:
        doc = {"schema": 1, "task": self.task, "dim": self.dim, "ok": self.ok,
               "summary": self.summary, "records": self.records}
        return json.dumps(doc, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for rec in self.records:
            w.writerow([_csv_cell(rec.get(c)) for c in self.columns])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# loading


def load(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([("", f"cannot read scenario: {exc}")]) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([("", f"invalid JSON: {exc}")]) from None
    validate(doc)
    return doc


def _path(parts) -> str:
    return "/".join(str(p) for p in parts)


def validate(doc) -> None:
    """Raise ScenarioError listing all schema and semantic violations."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [(_path(e.absolute_path), e.message)
              for e in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))]
    if errors:
        raise ScenarioError(errors)
    errors = []
    m = doc["dim"]
    task = doc["task"]
    for i, st in enumerate(doc.get("stages", [])):
        errors += _field_errors(st["field"], m, f"stages/{i}/field")
        try:
            ScalarFieldSpec.parse(st["func"], m)
        except ExprSyntaxError as exc:
            errors.append((f"stages/{i}/func", str(exc)))
    for i, p in enumerate(doc.get("points", [])):
        if len(p) != m:
            errors.append((f"points/{i}", f"point has {len(p)} coordinates, dim is {m}"))
    if "grid" in doc:
        axes = doc["grid"]
        if len(axes) != m:
            errors.append(("grid", f"grid has {len(axes)} axes, dim is {m}"))
        if int(np.prod([a["count"] for a in axes], dtype=float)) > MAX_GRID_POINTS:
            errors.append(("grid", f"grid exceeds {MAX_GRID_POINTS} points"))
    needs_stages = task in ("apply", "lambda", "classify", "grid", "commutator")
    if needs_stages and "stages" not in doc:
        errors.append(("stages", f"task {task!r} needs stages"))
    if task in ("apply", "lambda", "classify") and "points" not in doc:
        errors.append(("points", f"task {task!r} needs points"))
    if task == "grid" and "grid" not in doc:
        errors.append(("grid", "task 'grid' needs a grid"))
    if task == "commutator":
        if len(doc.get("stages", [])) != 2:
            errors.append(("stages", "commutator needs exactly 2 stages"))
        if "points" not in doc and "grid" not in doc:
            errors.append(("points", "commutator needs points or a grid"))
    if task == "verify-identities" and "seed" not in doc:
        errors.append(("seed", "verify-identities needs a seed"))
    if task == "decompose":
        errors += _decompose_errors(doc, m)
    if errors:
        raise ScenarioError(errors)


def _field_errors(spec, m, path):
    kind = spec["kind"]
    errs = []
    if kind == "translation":
        d = spec.get("direction")
        if d is None or len(d) != m:
            errs.append((f"{path}/direction", f"translation needs a direction of length {m}"))
    elif kind == "linear":
        A = spec.get("matrix")
        if A is None or len(A) != m or any(len(r) != m for r in A):
            errs.append((f"{path}/matrix", f"linear field needs a {m}x{m} matrix"))
    elif kind == "expression":
        comps = spec.get("components")
        if comps is None or len(comps) != m:
            errs.append((f"{path}/components", f"expression field needs {m} components"))
        else:
            for j, c in enumerate(comps):
                try:
                    ScalarFieldSpec.parse(c, m)
                except ExprSyntaxError as exc:
                    errs.append((f"{path}/components/{j}", str(exc)))
    return errs


def _decompose_errors(doc, m):
    errs = []
    if "map" not in doc:
        return [("map", "decompose needs a map")]
    if len(doc["map"]) != m:
        errs.append(("map", f"map has {len(doc['map'])} components, dim is {m}"))
    for j, c in enumerate(doc["map"]):
        try:
            ScalarFieldSpec.parse(c, m)
        except ExprSyntaxError as exc:
            errs.append((f"map/{j}", str(exc)))
    if ("leaf_dim" in doc) == ("foliation" in doc):
        errs.append(("leaf_dim", "give exactly one of leaf_dim or foliation"))
    if "leaf_dim" in doc and doc["leaf_dim"] > m:
        errs.append(("leaf_dim", f"leaf_dim exceeds dim {m}"))
    if "foliation" in doc:
        blocks = doc["foliation"]["blocks"]
        if sum(b["dim"] for b in blocks) != m:
            errs.append(("foliation/blocks", f"block dims must sum to {m}"))
        for i, b in enumerate(blocks):
            if b["dim"] > 0:
                if "field" not in b:
                    errs.append((f"foliation/blocks/{i}/field", "non-empty block needs a field"))
                else:
                    errs += _field_errors(b["field"], b["dim"], f"foliation/blocks/{i}/field")
    return errs


# ---------------------------------------------------------------------------
# building objects


def build_field(spec, m) -> VectorFieldSpec:
    kind = spec["kind"]
    if kind == "zero":
        return VectorFieldSpec.zero(m)
    if kind == "translation":
        return VectorFieldSpec.translation(spec["direction"])
    if kind == "linear":
        return VectorFieldSpec.linear(spec["matrix"])
    return VectorFieldSpec.expression(spec["components"], m)


def flow_config(doc) -> FlowConfig:
    f = doc.get("flow", {})
    defaults = FlowConfig()
    return FlowConfig(
        method=f.get("method", defaults.method),
        rk4_step=f.get("step", defaults.rk4_step),
        max_time=f.get("max_time", defaults.max_time),
        domain_radius=f.get("radius", defaults.domain_radius),
    )


def build_shift(doc) -> ShiftSpec:
    m = doc["dim"]
    pairs = [(build_field(st["field"], m), ScalarFieldSpec.parse(st["func"], m)) for st in doc["stages"]]
    return ShiftSpec.build(pairs, flow_config(doc), dim=m)


def grid_points(axes) -> np.ndarray:
    """Grid points in lexicographic order of the grid index (first axis slowest)."""
    values = [np.linspace(a["min"], a["max"], a["count"]) for a in axes]
    return np.array(list(itertools.product(*values)), dtype=float)


def query_points(doc) -> np.ndarray:
    if "points" in doc:
        return np.array(doc["points"], dtype=float).reshape(-1, doc["dim"])
    if "grid" in doc:
        return grid_points(doc["grid"])
    return np.zeros((0, doc["dim"]))


def _xcols(m, prefix="x"):
    return [f"{prefix}{i + 1}" for i in range(m)]


def _point_rec(x):
    return {f"x{i + 1}": float(v) for i, v in enumerate(x)}


# ---------------------------------------------------------------------------
# tasks


def _task_apply(doc):
    spec = build_shift(doc)
    m = doc["dim"]
    records = []
    for x in query_points(doc):
        y = apply_shift(spec, x)
        rec = _point_rec(x)
        rec.update({f"y{i + 1}": float(v) for i, v in enumerate(y)})
        records.append(rec)
    return Report("apply", m, _xcols(m) + _xcols(m, "y"), records)


def _task_lambda(doc):
    spec = build_shift(doc)
    m = doc["dim"]
    records = []
    for x in query_points(doc):
        lam = lambda_functional(spec, x)
        rec = _point_rec(x)
        rec.update({"lambda": lam.value, "residual": lam.cross_form_residual, "residual_ok": lam.residual_ok})
        records.append(rec)
    report = Report("lambda", m, _xcols(m) + ["lambda", "residual", "residual_ok"], records)
    report.summary["flagged_rows"] = sum(not r["residual_ok"] for r in records)
    return report


def _classification_report(task, spec, doc):
    m = doc["dim"]
    oracle = bool(doc.get("oracle", False))
    records = [classify_point(spec, x, with_oracle=oracle).as_record() for x in query_points(doc)]
    cols = _xcols(m) + ["lambda", "residual", "verdict"]
    if oracle:
        cols += ["fd_det", "oracle_residual"]
    cols.append("residual_ok")
    report = Report(task, m, cols, records)
    counts = {}
    for r in records:
        counts[r["verdict"]] = counts.get(r["verdict"], 0) + 1
    report.summary["verdicts"] = dict(sorted(counts.items()))
    report.summary["flagged_rows"] = sum(not r["residual_ok"] for r in records)
    return report


def _task_classify(doc):
    return _classification_report("classify", build_shift(doc), doc)


def _task_grid(doc):
    return _classification_report("grid", build_shift(doc), doc)


def _task_commutator(doc):
    base = build_shift(doc)
    (s1, s2) = base.stages
    spec = build_commutator(s1.field, s2.field, s1.func, s2.func, base.flow_cfg)
    report = _classification_report("commutator", spec, doc)
    report.summary["stage_functions"] = [str(st.func) for st in spec.stages]
    return report


def random_matrix_pairs(seed: int, count: int, rank_deficient: int, max_dim: int = 8):
    """Yield ``(A, B, forced_deficient)`` with ``A, B`` of a random shape m x n.

    The first ``rank_deficient`` pairs are products of thinner factors, so
    both matrices have rank below ``min(m, n)``. Factors are scaled so that
    every matrix has unit-variance entries.
    """
    rng = np.random.default_rng(seed)
    for k in range(count):
        m, n = (int(v) for v in rng.integers(1, max_dim + 1, size=2))
        if k < rank_deficient:
            ra, rb = (int(v) for v in rng.integers(0, min(m, n), size=2))
            A = rng.standard_normal((m, ra)) @ rng.standard_normal((ra, n)) / np.sqrt(max(ra, 1))
            B = rng.standard_normal((m, rb)) @ rng.standard_normal((rb, n)) / np.sqrt(max(rb, 1))
            yield A, B, True
        else:
            yield rng.standard_normal((m, n)), rng.standard_normal((m, n)), False


def identity_record(A, B):
    m, n = A.shape
    tol = IDENTITY_REL_TOL * (1.0 + float(np.linalg.norm(A) * np.linalg.norm(B)))
    det_res = abs(det(np.eye(m) + A @ B.T) - det(np.eye(n) + A.T @ B))
    cp_res = verify_product_char_identity(A, B)
    return {"m": m, "n": n, "det_residual": det_res, "charpoly_residual": cp_res,
            "tolerance": tol, "pass": bool(det_res <= tol and cp_res <= tol)}


DEGENERATE_PAIR = (np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[0.0, 1.0], [0.0, 0.0]]))


def _task_verify(doc):
    count = doc.get("pairs", 200)
    deficient = doc.get("rank_deficient", count // 5)
    records = []
    rec = {"index": 0, "rank_deficient": True}
    rec.update(identity_record(*DEGENERATE_PAIR))
    records.append(rec)
    pairs = random_matrix_pairs(doc["seed"], count, deficient, doc.get("max_dim", 8))
    for k, (A, B, forced) in enumerate(pairs, start=1):
        rec = {"index": k, "rank_deficient": forced}
        rec.update(identity_record(A, B))
        records.append(rec)
    cols = ["index", "m", "n", "rank_deficient", "det_residual", "charpoly_residual", "tolerance", "pass"]
    ok = all(r["pass"] for r in records)
    summary = {
        "seed": doc["seed"],
        "pairs": len(records),
        "rank_deficient": sum(r["rank_deficient"] for r in records),
        "max_det_residual": max(r["det_residual"] for r in records),
        "max_charpoly_residual": max(r["charpoly_residual"] for r in records),
        "failures": sum(not r["pass"] for r in records),
    }
    return Report("verify-identities", doc["dim"], cols, records, summary, ok)


def _task_decompose(doc):
    m = doc["dim"]
    f = LeafMapSpec.parse(doc["map"], m)
    cfg = flow_config(doc)
    sample = np.array(doc["points"], dtype=float) if "points" in doc else None
    if "leaf_dim" in doc:
        funcs = decompose_translation(f, doc["leaf_dim"], sample)
        spec = translation_shift_spec(funcs, m, cfg)
        kind = "translation"
    else:
        blocks = doc["foliation"]["blocks"]
        fol = ProductFoliationSpec(
            tuple(b["dim"] for b in blocks),
            tuple(build_field(b["field"], b["dim"]) if b["dim"] > 0 else None for b in blocks),
        )
        funcs = decompose_product(f, fol, cfg, sample)
        spec = product_shift_spec(fol, funcs, cfg)
        kind = "product"
    points = sample if sample is not None else query_points(doc)
    if len(points) == 0:
        points = sample_grid(m, per_axis=5)
    n = len(funcs)
    records = []
    for x in points:
        rec = _point_rec(x)
        for i, a in enumerate(funcs):
            rec[f"alpha{i + 1}"] = float(a.value(x.tolist()))
        rec["roundtrip_error"] = float(np.linalg.norm(apply_shift(spec, x) - f(x)))
        records.append(rec)
    cols = _xcols(m) + [f"alpha{i + 1}" for i in range(n)] + ["roundtrip_error"]
    summary = {
        "kind": kind,
        "shift_functions": [
            "retrieved numerically" if isinstance(a, RetrievedShiftFunction) else str(a) for a in funcs
        ],
        "periodic_blocks": [i for i, a in enumerate(funcs) if getattr(a, "periodic", False)],
        "max_roundtrip_error": max((r["roundtrip_error"] for r in records), default=0.0),
    }
    return Report("decompose", m, cols, records, summary)


_RUNNERS = {
    "apply": _task_apply,
    "lambda": _task_lambda,
    "classify": _task_classify,
    "grid": _task_grid,
    "verify-identities": _task_verify,
    "commutator": _task_commutator,
    "decompose": _task_decompose,
}


def run(doc) -> Report:
    """Execute a validated scenario document."""
    try:
        return _RUNNERS[doc["task"]](doc)
    except DimensionError as exc:
        raise ScenarioError([("", str(exc))]) from None
