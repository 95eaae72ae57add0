"""Run-config loading: schema validation, defaults and line-level diagnostics.

Configs are JSON or YAML documents.  Every key is checked against the schema
below, unknown keys are rejected, and each problem is reported with the line
it sits on.
"""
from __future__ import annotations

import copy
from dataclasses import fields

import jsonschema
import yaml

from .errors import ConfigError
from .pseudoflow import FlowParams

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_vec = {"type": "array", "items": _num, "minItems": 1}
_bool = {"type": "boolean"}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_flow_param_props = {}
for _f in fields(FlowParams):
    if _f.type in ("int", int):
        _flow_param_props[_f.name] = _int_pos
    elif _f.name in ("d0", "eta"):
        _flow_param_props[_f.name] = {"oneOf": [_pos, {"type": "null"}]}
    else:
        _flow_param_props[_f.name] = _num if _f.name == "quadrature_seed" else _pos
_flow_param_props["quadrature_seed"] = {"type": "integer", "minimum": 0}

_bubble_cfg = _obj({"alpha": _vec, "a": {"type": "array", "items": _vec, "minItems": 1},
                    "lambda": _vec}, ["a", "lambda"])

SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "domain": {"oneOf": [
        _obj({"type": {"const": "ball"}, "center": _vec, "radius": _pos,
              "normal_shell": _pos}, ["type", "center", "radius"]),
        _obj({"type": {"const": "sdf"},
              "kind": {"enum": ["ball", "ellipsoid", "rounded_box"]},
              "params": _obj({"center": _vec, "radius": _pos, "semi_axes": _vec,
                              "half_widths": _vec, "rounding": _pos}, ["center"])},
             ["type", "kind", "params"]),
    ]},
    "kfield": _obj({
        "critical_points": {"type": "array", "items": _obj(
            {"y": _vec, "beta": _num, "b": _vec, "eta": _num, "K0": _num},
            ["y", "beta", "b", "eta"])},
        "envelope": _obj({"decay_rate": {"type": "number", "minimum": 0}, "level": _pos,
                          "center": _vec}),
    }, ["critical_points"]),
    "greens": _obj({"backend": {"enum": ["auto", "analytic", "montecarlo"]},
                    "walks": _int_pos, "shell_width": _pos, "max_steps": _int_pos,
                    "antithetic": _bool, "workers": _int_pos}),
    "analyses": _obj({"assumptions": _bool, "criterion": _bool, "flow": _bool,
                      "bubbles": _bool}),
    "assumptions": _obj({"sample_budget": _int_pos}),
    "criterion": _obj({"subset_cap": _int_pos}),
    "flow": _obj({
        "params": _obj(_flow_param_props),
        "starts": {"type": "array", "items": _obj({"a": {"type": "array", "items": _vec,
                                                         "minItems": 1},
                                                   "lambda": _vec}, ["a", "lambda"])},
        "random_starts": _obj({"count": {"type": "integer", "minimum": 0},
                               "max_bubbles": _int_pos,
                               "lambda_range": {"type": "array", "items": _pos,
                                                "minItems": 2, "maxItems": 2}}),
        "initial_lambda": _pos,
    }),
    "bubbles": _obj({
        "eps": _pos,
        "quadrature_budget": _int_pos,
        "configurations": {"type": "array", "items": _bubble_cfg},
        "fit": _obj({"points_file": {"type": "string"}, "p": _int_pos,
                     "initial": _bubble_cfg, "max_iter": _int_pos}, ["points_file", "p",
                                                                     "initial"]),
    }),
    "output": _obj({"directory": {"type": "string"}, "report": {"type": "string"},
                    "trajectories": _bool}),
}, ["domain", "kfield"])

DEFAULTS = {
    "seed": 0,
    "greens": {"backend": "auto", "walks": 100_000, "shell_width": None, "max_steps": 10_000,
               "antithetic": True, "workers": 1},
    "analyses": {"assumptions": True, "criterion": True, "flow": False, "bubbles": False},
    "assumptions": {"sample_budget": 2000},
    "criterion": {"subset_cap": 12},
    "flow": {"params": {f.name: f.default for f in fields(FlowParams)}, "starts": [],
             "random_starts": {"count": 0, "max_bubbles": 2, "lambda_range": [20.0, 200.0]},
             "initial_lambda": 20.0},
    "bubbles": {"eps": 0.1, "quadrature_budget": 200_000, "configurations": []},
    "output": {"directory": ".", "report": "report.json", "trajectories": False},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _line_of(node, path):
    """1-based line of the YAML node at ``path`` (deepest existing ancestor)."""
    line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            hit = [(k, v) for k, v in node.value if k.value == key]
            if not hit:
                break
            k, node = hit[0]
            line = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _branch_errors(err):
    """For a failed ``oneOf`` pick the alternative selected by its ``type`` tag."""
    if err.validator != "oneOf" or not err.context:
        return [err]
    by_branch = {}
    for c in err.context:
        by_branch.setdefault(c.schema_path[0], []).append(c)
    tagged = [b for b, es in by_branch.items()
              if not any(list(c.relative_path) == ["type"] for c in es)]
    if len(tagged) == 1:
        return [c for c in by_branch[tagged[0]]]
    return [err]


def parse(text, source="<config>"):
    """Validate config text.  Returns the raw (non-defaulted) document."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError(f"{source}: cannot parse", [f"{source}:{line}: {getattr(exc, 'problem', exc)}"])
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping", [f"{source}:1: not a mapping"])
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)),
                                                                e.message))
    if errs:
        found = []
        for e in errs:
            for sub in _branch_errors(e):
                path = list(sub.absolute_path)
                if sub.validator == "additionalProperties":
                    known = sub.schema.get("properties", {})
                    for key in sorted(k for k in sub.instance if k not in known):
                        where = "/".join(map(str, path + [key]))
                        found.append((_line_of(root, path + [key]), where, "unknown key"))
                    continue
                where = "/".join(map(str, path)) or "(root)"
                found.append((_line_of(root, path), where, sub.message))
        diags = [f"{source}:{ln}: {w}: {m}" for ln, w, m in sorted(set(found))]
        raise ConfigError(f"{source}: {len(diags)} schema error(s)", diags)
    return data


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}", [f"{path}:0: {exc.strerror}"])
    return parse(text, str(path))


def resolve(data, seed=None):
    """Config with every default filled in."""
    cfg = _merge(DEFAULTS, data)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg
