"""Rule definitions, the extensible rule-kind registry, and rule validation.

A RuleSet is the per-pool recipe for turning raw table rows into records.
Built-in kinds cover direct column mapping, constants, pattern-based date
parsing, conjunctive row filters, and leading-row skips. New kinds snap in
through `register_rule_kind`; a registry is built once at startup and is
read-only afterwards, so rule generation and validation are safe to run
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .model import Datatype, DatasetSchema

__all__ = [
    "Rule",
    "RuleSet",
    "RuleInput",
    "RuleReport",
    "RuleRegistry",
    "RuleGenerationError",
    "DuplicateRuleKindError",
    "register_rule_kind",
    "default_registry",
    "DEFAULT_REGISTRY",
    "generate_rules",
    "validate_rules",
    "structural_violations",
    "coverage_map",
    "VALUE_KINDS",
    "FILTER_OPS",
]

VALUE_KINDS = frozenset({"column_map", "constant", "date_parse"})
FILTER_OPS = frozenset({"eq", "ne", "lt", "lte", "gt", "gte", "contains", "not_empty"})


class DuplicateRuleKindError(ValueError):
    pass


class RuleGenerationError(ValueError):
    """User rule input that cannot become a RuleSet; carries a stable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _is_source(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, int):
        return value >= 0
    return isinstance(value, str) and value != ""


def _valid_column_map(params: dict) -> bool:
    return _is_source(params.get("source"))


def _valid_constant(params: dict) -> bool:
    return "value" in params


def _valid_date_parse(params: dict) -> bool:
    if not _is_source(params.get("source")):
        return False
    pattern = params.get("pattern")
    return pattern is None or (isinstance(pattern, str) and pattern != "")


def _valid_row_filter(params: dict) -> bool:
    if not _is_source(params.get("column")):
        return False
    op = params.get("op")
    if op not in FILTER_OPS:
        return False
    return op == "not_empty" or "operand" in params


def _valid_skip_rows(params: dict) -> bool:
    count = params.get("count")
    return isinstance(count, int) and not isinstance(count, bool) and count >= 0


@dataclass(frozen=True)
class RuleKindSpec:
    kind: str
    param_validator: Callable[[dict], bool]
    produces_value: bool = False
    apply: Optional[Callable[..., Any]] = None


class RuleRegistry:
    """Lookup table of rule kinds. Populate at startup, read-only after."""

    def __init__(self) -> None:
        self._kinds: dict[str, RuleKindSpec] = {}

    def register(
        self,
        kind: str,
        param_validator: Callable[[dict], bool],
        *,
        produces_value: bool = False,
        apply: Optional[Callable[..., Any]] = None,
    ) -> "RuleRegistry":
        if kind in self._kinds:
            raise DuplicateRuleKindError(f"rule kind {kind!r} already registered")
        self._kinds[kind] = RuleKindSpec(
            kind=kind,
            param_validator=param_validator,
            produces_value=produces_value,
            apply=apply,
        )
        return self

    def get(self, kind: str) -> Optional[RuleKindSpec]:
        return self._kinds.get(kind)

    def __contains__(self, kind: str) -> bool:
        return kind in self._kinds

    def kinds(self) -> list[str]:
        return sorted(self._kinds)


def register_rule_kind(
    kind: str,
    param_validator: Callable[[dict], bool],
    *,
    registry: Optional[RuleRegistry] = None,
    produces_value: bool = False,
    apply: Optional[Callable[..., Any]] = None,
) -> RuleRegistry:
    """Add a rule kind to a registry (the shared default unless given one).

    Returns the registry handle so callers can chain or inspect it. A kind
    that produces values should pass an `apply(row, headers, params)` callable
    returning the raw text to coerce.
    """
    target = registry if registry is not None else DEFAULT_REGISTRY
    return target.register(
        kind, param_validator, produces_value=produces_value, apply=apply
    )


def default_registry() -> RuleRegistry:
    """A fresh registry holding only the built-in kinds."""
    registry = RuleRegistry()
    registry.register("column_map", _valid_column_map, produces_value=True)
    registry.register("constant", _valid_constant, produces_value=True)
    registry.register("date_parse", _valid_date_parse, produces_value=True)
    registry.register("row_filter", _valid_row_filter)
    registry.register("skip_rows", _valid_skip_rows)
    return registry


DEFAULT_REGISTRY = default_registry()


@dataclass(frozen=True)
class Rule:
    kind: str
    target_attribute: Optional[str]
    params: dict

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "target_attribute": self.target_attribute,
            "params": dict(self.params),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Rule":
        return cls(
            kind=str(payload["kind"]),
            target_attribute=payload.get("target_attribute"),
            params=dict(payload.get("params", {})),
        )


@dataclass(frozen=True)
class RuleSet:
    header_row: Optional[int] = None
    rules: tuple[Rule, ...] = ()
    version: int = 1

    def to_json(self) -> dict:
        return {
            "header_row": self.header_row,
            "rules": [r.to_json() for r in self.rules],
            "version": self.version,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "RuleSet":
        header_row = payload.get("header_row")
        if header_row is not None:
            header_row = int(header_row)
        return cls(
            header_row=header_row,
            rules=tuple(Rule.from_json(r) for r in payload.get("rules", [])),
            version=int(payload.get("version", 1)),
        )


@dataclass(frozen=True)
class AttributeChoice:
    mode: str  # "map" | "constant" | "date"
    source: Optional[Any] = None
    pattern: Optional[str] = None
    value: Any = None


@dataclass(frozen=True)
class FilterChoice:
    column: Any
    op: str
    operand: Any = None


@dataclass(frozen=True)
class RuleInput:
    """What the user picked per attribute, before it becomes a RuleSet."""

    attributes: dict[str, AttributeChoice]
    header_row: Optional[int] = None
    filters: tuple[FilterChoice, ...] = ()
    skip: int = 0

    @classmethod
    def from_json(cls, payload: dict) -> "RuleInput":
        raw_attrs = payload.get("attributes")
        if not isinstance(raw_attrs, dict):
            raise RuleGenerationError(
                "invalid-input", "rule input needs an 'attributes' object"
            )
        attributes = {}
        for name, choice in raw_attrs.items():
            if not isinstance(choice, dict):
                raise RuleGenerationError(
                    "invalid-input", f"choice for {name} must be an object"
                )
            attributes[name] = AttributeChoice(
                mode=str(choice.get("mode", "")),
                source=choice.get("source"),
                pattern=choice.get("pattern"),
                value=choice.get("value"),
            )
        filters = tuple(
            FilterChoice(
                column=f.get("column"),
                op=str(f.get("op", "")),
                operand=f.get("operand"),
            )
            for f in payload.get("filters", [])
        )
        header_row = payload.get("header_row")
        skip = payload.get("skip", 0)
        return cls(
            attributes=attributes,
            header_row=None if header_row is None else int(header_row),
            filters=filters,
            skip=int(skip),
        )


@dataclass
class RuleReport:
    """Outcome of validating a RuleSet against a schema and a table sample."""

    ok: bool
    attribute_coverage: dict[str, dict]
    sample_outcomes: list[dict]
    violations: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "attribute_coverage": self.attribute_coverage,
            "sample_outcomes": self.sample_outcomes,
            "violations": self.violations,
        }


def _resolve_header(source: str, headers: Optional[list[str]]) -> bool:
    if not headers:
        return False
    wanted = source.strip().casefold()
    return any(h.strip().casefold() == wanted for h in headers)


def generate_rules(
    rule_input: RuleInput,
    schema: DatasetSchema,
    sample: Optional[Any] = None,
) -> RuleSet:
    """Convert per-attribute user choices into a RuleSet.

    Deterministic: value rules come out in schema attribute order, then
    filters in input order, then the skip rule. Header-name sources are
    checked (case-insensitively) against the sample's headers but recorded
    exactly as the user typed them; resolution is redone at ingest time.
    """
    names = set(schema.attribute_names())
    for name in rule_input.attributes:
        if name not in names:
            raise RuleGenerationError(
                "unknown-attribute", f"unknown attribute {name}"
            )
    for attr in schema.attributes:
        if attr.required and attr.name not in rule_input.attributes:
            raise RuleGenerationError(
                "missing-required", f"required attribute {attr.name} has no rule"
            )

    sample_headers = getattr(sample, "headers", None)

    def check_source(source: Any, what: str) -> None:
        if not _is_source(source):
            raise RuleGenerationError("invalid-input", f"{what} needs a source")
        if isinstance(source, str):
            if rule_input.header_row is None:
                raise RuleGenerationError(
                    "unresolvable-header",
                    f"header-name source {source!r} needs a header row",
                )
            # membership is only checkable when a sample is on hand; without
            # one, resolution happens again at apply time
            if sample is not None and not _resolve_header(source, sample_headers):
                raise RuleGenerationError(
                    "unresolvable-header",
                    f"header {source!r} not present in the sample",
                )

    rules: list[Rule] = []
    for attr in schema.attributes:
        choice = rule_input.attributes.get(attr.name)
        if choice is None:
            continue
        if choice.mode == "map":
            check_source(choice.source, f"attribute {attr.name}")
            rules.append(
                Rule("column_map", attr.name, {"source": choice.source})
            )
        elif choice.mode == "date":
            check_source(choice.source, f"attribute {attr.name}")
            params: dict[str, Any] = {"source": choice.source}
            if choice.pattern:
                params["pattern"] = choice.pattern
            rules.append(Rule("date_parse", attr.name, params))
        elif choice.mode == "constant":
            rules.append(Rule("constant", attr.name, {"value": choice.value}))
        else:
            raise RuleGenerationError(
                "invalid-input",
                f"unknown mode {choice.mode!r} for attribute {attr.name}",
            )
    for f in rule_input.filters:
        if f.op not in FILTER_OPS:
            raise RuleGenerationError(
                "invalid-input", f"unknown filter op {f.op!r}"
            )
        check_source(f.column, "row filter")
        params = {"column": f.column, "op": f.op}
        if f.op != "not_empty":
            params["operand"] = f.operand
        rules.append(Rule("row_filter", None, params))
    if rule_input.skip:
        if rule_input.skip < 0:
            raise RuleGenerationError("invalid-input", "skip count must be >= 0")
        rules.append(Rule("skip_rows", None, {"count": rule_input.skip}))
    return RuleSet(header_row=rule_input.header_row, rules=tuple(rules), version=1)


def structural_violations(
    rules: RuleSet,
    schema: DatasetSchema,
    registry: Optional[RuleRegistry] = None,
) -> list[str]:
    """Schema-level problems with a RuleSet, checkable without any sample."""
    registry = registry or DEFAULT_REGISTRY
    violations: list[str] = []
    produced: set[str] = set()
    skip_seen = 0
    for rule in rules.rules:
        spec = registry.get(rule.kind)
        if spec is None:
            violations.append(f"unregistered kind {rule.kind}")
            continue
        if not spec.param_validator(rule.params):
            violations.append(f"invalid params for {rule.kind} rule")
            continue
        if rule.kind == "skip_rows":
            skip_seen += 1
            if skip_seen > 1:
                violations.append("multiple skip_rows rules")
            continue
        if rule.kind == "row_filter":
            if isinstance(rule.params.get("column"), str) and rules.header_row is None:
                violations.append(
                    f"header-name source {rule.params['column']!r} requires header_row"
                )
            continue
        # everything else produces a value for a target attribute
        target = rule.target_attribute
        attr = schema.get(target or "")
        if attr is None:
            violations.append(f"unknown target attribute {target!r}")
            continue
        if target in produced:
            violations.append(f"multiple value rules for {target}")
        produced.add(target)
        source = rule.params.get("source")
        if isinstance(source, str) and rules.header_row is None:
            violations.append(
                f"header-name source {source!r} requires header_row"
            )
        if rule.kind == "date_parse" and attr.datatype not in (
            Datatype.DATE,
            Datatype.DATETIME,
        ):
            violations.append(
                f"date_parse targets non-date attribute {target}"
            )
    return violations


def coverage_map(
    rules: RuleSet,
    schema: DatasetSchema,
    registry: Optional[RuleRegistry] = None,
) -> tuple[dict[str, dict], list[str]]:
    """Which attribute is produced by which rule kind, plus coverage gaps."""
    registry = registry or DEFAULT_REGISTRY
    covered_by: dict[str, str] = {}
    for rule in rules.rules:
        spec = registry.get(rule.kind)
        produces = (
            rule.kind in VALUE_KINDS or (spec is not None and spec.produces_value)
        )
        if produces and rule.target_attribute and rule.target_attribute not in covered_by:
            covered_by[rule.target_attribute] = rule.kind
    coverage = {}
    gaps: list[str] = []
    for attr in schema.attributes:
        kind = covered_by.get(attr.name)
        coverage[attr.name] = {"covered": kind is not None, "rule_kind": kind}
        if attr.required and kind is None:
            gaps.append(f"{attr.name} uncovered")
    return coverage, gaps


def validate_rules(
    rules: RuleSet,
    schema: DatasetSchema,
    sample: Any,
    registry: Optional[RuleRegistry] = None,
) -> RuleReport:
    """Dry-run a RuleSet over a table sample and report everything found.

    Never mutates state; problems come back as report content, not errors.
    ok is true exactly when there are no violations, which requires every
    required attribute to be covered and every sample row to transform.
    """
    from .transform import RuleRunner, TransformStructureError

    registry = registry or DEFAULT_REGISTRY
    violations = structural_violations(rules, schema, registry)
    coverage, gaps = coverage_map(rules, schema, registry)
    violations.extend(gaps)

    sample_outcomes: list[dict] = []
    if not violations or all(
        v.endswith("uncovered") for v in violations
    ):
        # structural problems block the dry run; coverage gaps do not
        try:
            runner = RuleRunner(rules, schema, getattr(sample, "headers", None), registry)
            _, outcomes = runner.run(getattr(sample, "rows", []), collect_outcomes=True)
            for index, outcome in outcomes:
                entry = {
                    "source_row_index": index,
                    "filtered": outcome.disposition == "filtered",
                    "cells": outcome.cells_json() if outcome.disposition != "filtered" else {},
                }
                sample_outcomes.append(entry)
                if outcome.disposition == "error":
                    for attr_name, message in outcome.errors:
                        if message.endswith("uncovered"):
                            continue  # already reported once via coverage
                        where = f" ({attr_name})" if attr_name else ""
                        violations.append(f"sample row {index}{where}: {message}")
        except TransformStructureError as exc:
            violations.append(str(exc))

    return RuleReport(
        ok=not violations,
        attribute_coverage=coverage,
        sample_outcomes=sample_outcomes,
        violations=violations,
    )
