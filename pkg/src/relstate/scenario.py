"""Scenario files: YAML parsing, overrides, schema validation and checks."""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

ENGINES = ("relstate", "geometry", "evolve", "bridge", "phase", "clock")


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent forms without a dot (``1e-3``) as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


class ScenarioError(Exception):
    """Invalid scenario; the message names the offending field and line."""


def schema() -> dict:
    return json.loads(resources.files("relstate").joinpath("schema/scenario.json").read_text())


def fixture_dir():
    return resources.files("relstate").joinpath("fixtures")


def list_fixtures() -> dict[str, str]:
    """Shipped fixture names mapped to their descriptions."""
    out = {}
    for entry in sorted(fixture_dir().iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            data = yaml.load(entry.read_text(), Loader=_Loader) or {}
            out[entry.name[:-5]] = str(data.get("description", ""))
    return out


def resolve_path(name: str) -> tuple[str, str]:
    """Return ``(text, display name)`` for a file path or a shipped fixture name."""
    p = Path(name)
    if p.is_file():
        return p.read_text(), str(p)
    stem = p.name[:-5] if p.name.endswith(".yaml") else p.name
    entry = fixture_dir().joinpath(stem + ".yaml")
    if (p.parent == Path(".") or p.parent.name == "fixtures") and entry.is_file():
        return entry.read_text(), f"fixtures/{stem}.yaml"
    raise ScenarioError(f"{name}: no such file or shipped fixture")


def _line_index(node, prefix=(), out=None) -> dict:
    """Map key paths to 1-based source lines from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = prefix + (key.value,)
            out[path] = key.start_mark.line + 1
            _line_index(value, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for k, value in enumerate(node.value):
            out[prefix + (k,)] = value.start_mark.line + 1
            _line_index(value, prefix + (k,), out)
    return out


def _parse_value(text: str):
    try:
        value = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError:
        return text
    return value


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as YAML scalars or lists."""
    out = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ScenarioError(f"override {item!r} has an empty key")
        node = out
        for p in parts[:-1]:
            if not isinstance(node.setdefault(p, {}), dict):
                raise ScenarioError(f"override {item!r}: {p!r} is not a mapping")
            node = node[p]
        node[parts[-1]] = _parse_value(raw)
    return out


@dataclass(frozen=True)
class Scenario:
    data: dict
    source: str

    @property
    def engine(self) -> str:
        return self.data["engine"]

    @property
    def block(self) -> dict:
        return self.data[self.engine]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def output(self, key: str, default):
        return self.data.get("output", {}).get(key, default)


def _field(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def validate(data, lines: dict, source: str) -> None:
    """Raise :class:`ScenarioError` naming the field (and line) of the first problem."""
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: scenario must be a mapping")
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = tuple(err.absolute_path)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            path = path + (extra[0],) if extra else path
        elif err.validator == "required":
            path = path + (err.message.split("'")[1],)
        line = next((lines[path[:k]] for k in range(len(path), 0, -1) if path[:k] in lines), None)
        where = f"{source}:{line}" if line else source
        raise ScenarioError(f"{where}: field '{_field(path)}': {err.message}")
    present = [e for e in ENGINES if e in data]
    if present != [data["engine"]]:
        line = lines.get(("engine",))
        raise ScenarioError(f"{source}:{line}: field 'engine': need exactly one engine block matching "
                            f"'{data['engine']}', found {present or 'none'}")


def load(name: str, overrides=()) -> Scenario:
    """Read, override and validate a scenario file or shipped fixture."""
    text, source = resolve_path(name)
    try:
        node = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ScenarioError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from exc
    lines = _line_index(node) if node is not None else {}
    data = apply_overrides(data or {}, overrides)
    validate(data, lines, source)
    return Scenario(data, source)


def evaluate(metrics: dict, defaults: dict, overrides: dict | None) -> list[dict]:
    """Compare metrics with tolerances; scenario values replace task defaults."""
    merged = dict(defaults)
    merged.update(overrides or {})
    out = []
    for name, bound in merged.items():
        if name not in metrics:
            raise ScenarioError(f"field 'tolerances.{name}': no metric named {name!r}")
        value = float(metrics[name])
        if isinstance(bound, (list, tuple)):
            ok = bool(bound[0] <= value <= bound[1])
        else:
            ok = bool(value <= bound)
        out.append({"metric": name, "value": value, "bound": bound, "passed": ok})
    return out
