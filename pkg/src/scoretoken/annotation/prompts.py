"""Prompt templates for annotation, inference and judging.

Template bodies live in ``templates/*.txt`` with ``{name}`` placeholders; the
manifest ``templates/manifest.json`` maps each template id to its file, the
fields a caller supplies and the fields derived at render time. A body file
ends with exactly one newline, which is not part of the rendered prompt.

Derived fields:

* ``description``: catalog description of ``attribute`` without its final
  period (the templates supply their own).
* ``degree_clause``: ``", with a high degree of aesthetic appeal"`` when the
  overall score is above 75, the ``low`` variant below 25, elided otherwise.
* ``model_count`` / ``model_list`` / ``model_choices``: the number word, the
  serial-comma list and the plain comma list of the judged model names.
"""

from __future__ import annotations

import hashlib
import json
import math
import string
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping, Sequence

from ..errors import ConditionalUnresolvable, MissingField, UnknownAttribute, UnknownTemplate

TEMPLATE_IDS = (
    "Type1Score",
    "APDDv2",
    "SPAQ",
    "KonIQ",
    "Impressions",
    "InferScore",
    "InferAttribute",
    "InferAttributeWithBackground",
    "JudgeSingleChoice",
    "ExpertPanelAttribute",
)

HIGH_DEGREE_ABOVE = 75.0
LOW_DEGREE_BELOW = 25.0

_NUMBER_WORDS = (
    "zero one two three four five six seven eight nine ten eleven twelve thirteen "
    "fourteen fifteen sixteen seventeen eighteen nineteen twenty"
).split()


def _asset(name: str) -> str:
    return resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class Attribute:
    name: str
    description: str


@dataclass(frozen=True)
class AttributeCatalog:
    attributes: tuple[Attribute, ...]
    overall: Attribute

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def get(self, name: str) -> Attribute:
        for a in (*self.attributes, self.overall):
            if a.name == name:
                return a
        raise UnknownAttribute(f"unknown aesthetic attribute {name!r}")

    def __contains__(self, name: str) -> bool:
        return any(a.name == name for a in (*self.attributes, self.overall))

    def __iter__(self):
        return iter(self.attributes)

    def __len__(self) -> int:
        return len(self.attributes)


@lru_cache(maxsize=None)
def attribute_catalog() -> AttributeCatalog:
    """The eight aesthetic attributes in order, plus the overall-score entry."""
    raw = json.loads(_asset("attributes.json"))
    attrs = tuple(Attribute(a["name"], a["description"]) for a in raw["attributes"])
    return AttributeCatalog(attrs, Attribute(raw["overall"]["name"], raw["overall"]["description"]))


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    fields: tuple[str, ...]
    derived: tuple[str, ...] = ()
    numeric_reply: bool = False
    degree_field: str | None = None

    @property
    def placeholders(self) -> tuple[str, ...]:
        """Placeholder names in order of first appearance."""
        seen: list[str] = []
        for _, name, _, _ in string.Formatter().parse(self.body):
            if name is not None and name not in seen:
                seen.append(name)
        return tuple(seen)


@lru_cache(maxsize=None)
def _manifest() -> dict:
    return json.loads(_asset("manifest.json"))


@lru_cache(maxsize=None)
def get_template(template_id: str) -> PromptTemplate:
    entry = _manifest().get(template_id)
    if entry is None:
        raise UnknownTemplate(f"unknown template {template_id!r}; known: {', '.join(TEMPLATE_IDS)}")
    body = _asset(entry["file"])
    if body.endswith("\n"):
        body = body[:-1]
    return PromptTemplate(
        template_id,
        body,
        tuple(entry["fields"]),
        tuple(entry.get("derived", ())),
        bool(entry.get("numeric_reply", False)),
        entry.get("degree_field"),
    )


def format_value(value: Any) -> str:
    """Integral floats print without a decimal part; other floats use repr."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        if math.isfinite(value) and value == int(value):
            return str(int(value))
        return repr(value)
    return str(value)


def degree_clause(score: float, strict: bool = False) -> str:
    if score > HIGH_DEGREE_ABOVE:
        return ", with a high degree of aesthetic appeal"
    if score < LOW_DEGREE_BELOW:
        return ", with a low degree of aesthetic appeal"
    if strict:
        raise ConditionalUnresolvable(
            f"score {format_value(score)} is within [{LOW_DEGREE_BELOW:g}, {HIGH_DEGREE_ABOVE:g}]; "
            "the degree clause is undefined"
        )
    return ""


def number_word(n: int) -> str:
    return _NUMBER_WORDS[n] if 0 <= n < len(_NUMBER_WORDS) else str(n)


def serial_list(items: Sequence[str]) -> str:
    """``a``, ``a and b``, ``a, b, and c``."""
    items = list(items)
    if len(items) <= 1:
        return "".join(items)
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def _derive(t: PromptTemplate, fields: Mapping[str, Any], strict: bool) -> dict[str, str]:
    out: dict[str, str] = {}
    if "description" in t.derived and "description" not in fields and "attribute" in fields:
        out["description"] = attribute_catalog().get(str(fields["attribute"])).description.rstrip(".")
    if "degree_clause" in t.derived and "degree_clause" not in fields:
        if t.degree_field not in fields:
            raise MissingField(t.degree_field, t.template_id)
        out["degree_clause"] = degree_clause(float(fields[t.degree_field]), strict)
    if "model_list" in t.derived:
        if "models" not in fields:
            raise MissingField("models", t.template_id)
        models = [str(m) for m in fields["models"]]
        if not models:
            raise ValueError("judge prompt needs at least one model")
        out.setdefault("model_count", number_word(len(models)))
        out["model_list"] = serial_list(models)
        out["model_choices"] = ", ".join(models)
    return out


def render(template_id: str, fields: Mapping[str, Any] | None = None, strict: bool = False) -> str:
    """Render a template from a field map.

    With ``strict`` a mid-range score in a degree-clause template raises
    :class:`ConditionalUnresolvable` instead of eliding the clause.
    """
    t = get_template(template_id)
    fields = dict(fields or {})
    values = {k: format_value(v) for k, v in fields.items()}
    values.update(_derive(t, fields, strict))
    for name in t.placeholders:
        if name not in values:
            raise MissingField(name, template_id)
    return t.body.format_map(values)


@dataclass(frozen=True)
class PromptInstance:
    """A rendered prompt and where it came from."""

    template_id: str
    text: str
    fields: Mapping[str, Any] = field(default_factory=dict)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def render_instance(template_id: str, fields: Mapping[str, Any] | None = None, strict: bool = False) -> PromptInstance:
    return PromptInstance(template_id, render(template_id, fields, strict), dict(fields or {}))


def render_attribute_prompt(attribute_name: str, with_background: bool = False) -> str:
    """Attribute inference prompt, optionally prefixed with the catalog description."""
    if attribute_name not in attribute_catalog():
        raise UnknownAttribute(f"unknown aesthetic attribute {attribute_name!r}")
    template_id = "InferAttributeWithBackground" if with_background else "InferAttribute"
    return render(template_id, {"attribute": attribute_name})
