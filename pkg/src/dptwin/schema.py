"""Attribute schemas, instruction templates, and wrong-prompt enumeration."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Attribute",
    "AttributeSchema",
    "PromptTemplate",
    "SchemaError",
    "render",
    "wrong_prompts",
    "sample_wrong_prompts",
]

_PLACEHOLDER_RE = re.compile(r"\{([^{}]+)\}")


class SchemaError(ValueError):
    """Raised when a schema, template, or attribute assignment is invalid."""


@dataclass(frozen=True)
class Attribute:
    """One categorical attribute: its name, value set, and verbalizer map."""

    name: str
    values: tuple[str, ...]
    verbalizer: dict[str, str] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if len(self.values) < 2:
            raise SchemaError(f"attribute {self.name!r} needs at least 2 values")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"attribute {self.name!r} has duplicate values")
        verb = self.verbalizer
        if verb is None:
            verb = {v: v for v in self.values}
            object.__setattr__(self, "verbalizer", verb)
        missing = set(self.values) - set(verb)
        if missing:
            raise SchemaError(f"attribute {self.name!r}: no verbalization for {sorted(missing)}")
        rendered = [verb[v] for v in self.values]
        if len(set(rendered)) != len(rendered):
            raise SchemaError(f"attribute {self.name!r}: verbalizations are not pairwise distinct")

    def verbalize(self, value: str) -> str:
        if value not in self.verbalizer:
            raise SchemaError(f"unknown value {value!r} for attribute {self.name!r}")
        return self.verbalizer[value]


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered collection of categorical attributes with verbalizers."""

    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        if len(self.attributes) < 1:
            raise SchemaError("schema needs at least one attribute")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise SchemaError(f"unknown attribute {name!r}")

    def validate_assignment(self, assignment: dict[str, str], partial: bool = False) -> None:
        """Check that every key names a schema attribute with a legal value.

        With ``partial=False`` additionally require one value per attribute.
        """
        for name, value in assignment.items():
            attr = self.attribute(name)
            if value not in attr.values:
                raise SchemaError(
                    f"value {value!r} not in value set of attribute {name!r}"
                )
        if not partial:
            missing = set(self.names) - set(assignment)
            if missing:
                raise SchemaError(f"assignment missing attributes {sorted(missing)}")

    def assignments(self) -> list[dict[str, str]]:
        """All full attribute assignments, lexicographic over value indices."""
        combos = itertools.product(*(a.values for a in self.attributes))
        return [dict(zip(self.names, combo)) for combo in combos]

    @classmethod
    def from_dict(cls, obj: dict) -> "AttributeSchema":
        attrs = []
        for a in obj["attributes"]:
            attrs.append(
                Attribute(
                    name=a["name"],
                    values=tuple(a["values"]),
                    verbalizer=dict(a.get("verbalizer") or {v: v for v in a["values"]}),
                )
            )
        return cls(attributes=tuple(attrs))

    def to_dict(self) -> dict:
        return {
            "attributes": [
                {"name": a.name, "values": list(a.values), "verbalizer": dict(a.verbalizer)}
                for a in self.attributes
            ]
        }


@dataclass(frozen=True)
class PromptTemplate:
    """Template string with one ``{name}`` placeholder per schema attribute."""

    template: str

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.template))

    def check_against(self, schema: AttributeSchema) -> None:
        ph = self.placeholders()
        names = set(schema.names)
        if ph != names:
            raise SchemaError(
                f"template placeholders {sorted(ph)} do not match schema attributes {sorted(names)}"
            )


DEFAULT_TEMPLATE = PromptTemplate("Write a {sentiment} review:")


def render(template: PromptTemplate, schema: AttributeSchema, assignment: dict[str, str]) -> str:
    """Fill the template's placeholders with the verbalizations of ``assignment``."""
    template.check_against(schema)
    schema.validate_assignment(assignment)
    out = template.template
    for attr in schema.attributes:
        out = out.replace("{%s}" % attr.name, attr.verbalize(assignment[attr.name]))
    return out


def wrong_prompts(
    template: PromptTemplate,
    schema: AttributeSchema,
    assignment: dict[str, str],
    mode: str = "all_differ",
) -> list[str]:
    """Instructions for attribute assignments not matching ``assignment``.

    ``mode="all_differ"`` (default): every attribute takes a value different
    from the assigned one, so the set has size prod_j (|C_j| - 1).
    ``mode="any_differ"``: any assignment differing in at least one attribute,
    size prod_j |C_j| - 1.  Order is lexicographic over value indices.
    """
    template.check_against(schema)
    schema.validate_assignment(assignment)
    if mode not in ("all_differ", "any_differ"):
        raise SchemaError(f"unknown wrong-prompt mode {mode!r}")
    pools = []
    for attr in schema.attributes:
        if mode == "all_differ":
            pools.append([v for v in attr.values if v != assignment[attr.name]])
        else:
            pools.append(list(attr.values))
    out = []
    for combo in itertools.product(*pools):
        if mode == "any_differ" and all(
            v == assignment[n] for n, v in zip(schema.names, combo)
        ):
            continue
        out.append(render(template, schema, dict(zip(schema.names, combo))))
    return out


def sample_wrong_prompts(
    template: PromptTemplate,
    schema: AttributeSchema,
    assignment: dict[str, str],
    k: int,
    seed: int,
    mode: str = "all_differ",
) -> list[str]:
    """Draw ``k`` wrong prompts uniformly without replacement (all if k >= size)."""
    if k < 1:
        raise SchemaError("k must be >= 1")
    full = wrong_prompts(template, schema, assignment, mode=mode)
    if k >= len(full):
        return full
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(full), size=k, replace=False)
    return [full[i] for i in idx]
