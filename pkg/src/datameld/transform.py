"""Delimited-text parsing and rule-driven transformation into schema records.

The parser implements RFC-4180 semantics for CSV (quoted fields, embedded
delimiters and newlines, doubled quotes) as a character state machine, and
plain tab-splitting for TSV. It streams: rows come out of a generator one at
a time, so a large resource never has to be materialized as a parsed table.

Rule application is row-isolated. A row that fails coercion or conformance
produces error entries and no record; every other row is unaffected. The
accounting identity holds for every input:

    len(records) + distinct error rows + rows_filtered == rows_read

Whitespace is trimmed from cells before coercion, thousands-separator commas
are stripped for numeric coercion, and the decimal separator is fixed to
``.`` (no locale support).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Any, Callable, Iterable, Iterator, Optional

from .model import (
    AttributeSpec,
    Datatype,
    DatasetSchema,
    canonical_scalar,
    parse_iso_datetime,
    values_to_json,
)
from .rules import DEFAULT_REGISTRY, Rule, RuleRegistry, RuleSet, VALUE_KINDS

__all__ = [
    "TableData",
    "TransformResult",
    "EncodingError",
    "UnterminatedQuoteError",
    "CoercionError",
    "TransformStructureError",
    "parse_table",
    "coerce_value",
    "apply_rules",
    "apply_rules_streamed",
    "preview",
]


class EncodingError(ValueError):
    """Payload is not valid UTF-8."""


class UnterminatedQuoteError(ValueError):
    """A quoted CSV field never closed before end of input."""

    def __init__(self, line: int):
        super().__init__(f"unterminated quote starting at line {line}")
        self.line = line


class TransformStructureError(ValueError):
    """A problem with the rules/table combination that no row can survive."""


class CoercionError(ValueError):
    def __init__(self, cell: str, datatype: Datatype):
        super().__init__(f"cannot coerce {cell!r} to {datatype.value}")
        self.cell = cell
        self.datatype = datatype


@dataclass
class TableData:
    """A parsed table: optional headers, data rows, and per-row line ordinals."""

    headers: Optional[list[str]]
    rows: list[list[str]]
    source_offsets: list[int]


@dataclass
class TransformResult:
    records: list[dict] = field(default_factory=list)
    row_errors: list[dict] = field(default_factory=list)
    rows_read: int = 0
    rows_filtered: int = 0

    def distinct_error_rows(self) -> int:
        return len({e["source_row_index"] for e in self.row_errors})

    def to_json(self, schema: DatasetSchema) -> dict:
        return {
            "records": [
                {
                    "source_row_index": r["source_row_index"],
                    "values": values_to_json(r["values"], schema),
                }
                for r in self.records
            ],
            "row_errors": list(self.row_errors),
            "rows_read": self.rows_read,
            "rows_filtered": self.rows_filtered,
        }


# ---------------------------------------------------------------------------
# Parsing


def _decode(payload: bytes) -> str:
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"payload is not valid UTF-8: {exc}") from None
    if text.startswith("﻿"):
        text = text[1:]
    return text


def _iter_csv_rows(text: str) -> Iterator[tuple[int, list[str]]]:
    """Yield (starting line ordinal, cells) per CSV row.

    Matches the lenient reference behavior for quotes: a quote only opens a
    quoted section at field start, doubled quotes inside a quoted section are
    literal, and text following a closing quote is appended to the field.
    Blank lines yield an empty row. An unclosed quote at end of input raises
    UnterminatedQuoteError with the 1-based line it started on.
    """
    row: list[str] = []
    cell: list[str] = []
    line = 0
    row_start = 0
    quote_open_line = 0
    # states: 0 start-of-field, 1 unquoted, 2 quoted, 3 just-closed-quote
    state = 0
    row_has_cells = False
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if state == 2:
            if ch == '"':
                state = 3
            else:
                if ch == "\r":
                    if i + 1 < n and text[i + 1] == "\n":
                        cell.append("\r\n")
                        i += 1
                    else:
                        cell.append("\r")
                    line += 1
                else:
                    cell.append(ch)
                    if ch == "\n":
                        line += 1
            i += 1
            continue
        if ch == '"':
            if state == 0:
                state = 2
                quote_open_line = line + 1
            elif state == 3:
                cell.append('"')
                state = 2
            else:
                cell.append('"')
            i += 1
            continue
        if ch == ",":
            row.append("".join(cell))
            cell = []
            state = 0
            row_has_cells = True
            i += 1
            continue
        if ch in ("\r", "\n"):
            if ch == "\r" and i + 1 < n and text[i + 1] == "\n":
                i += 1
            if state == 0 and not row_has_cells:
                yield row_start, []
            else:
                row.append("".join(cell))
                yield row_start, row
            row = []
            cell = []
            state = 0
            row_has_cells = False
            line += 1
            row_start = line
            i += 1
            continue
        cell.append(ch)
        if state in (0, 3):
            state = 1
        i += 1
    if state == 2:
        raise UnterminatedQuoteError(quote_open_line)
    if row_has_cells or cell or state != 0:
        row.append("".join(cell))
        yield row_start, row


def _iter_tsv_rows(text: str) -> Iterator[tuple[int, list[str]]]:
    """TSV rows: tab-separated, no quoting. Blank lines yield empty rows."""
    if not text:
        return
    line = 0
    start = 0
    n = len(text)
    i = 0
    while i <= n:
        if i == n or text[i] in ("\r", "\n"):
            chunk = text[start:i]
            yield line, ([] if chunk == "" else chunk.split("\t"))
            if i == n:
                return
            if text[i] == "\r" and i + 1 < n and text[i + 1] == "\n":
                i += 1
            line += 1
            i += 1
            start = i
            # trailing terminator ends input with no extra row
            if i == n:
                return
        else:
            i += 1


def _iter_rows(payload: bytes, format: str) -> Iterator[tuple[int, list[str]]]:
    text = _decode(payload)
    if format == "csv":
        return _iter_csv_rows(text)
    if format == "tsv":
        return _iter_tsv_rows(text)
    raise ValueError(f"unknown table format {format!r}")


def parse_table(
    payload: bytes,
    format: str,
    header_row: Optional[int] = None,
    limit: Optional[int] = None,
) -> TableData:
    """Parse delimited text into a table, optionally truncating the data rows.

    Rows before ``header_row`` are discarded; the header row itself becomes
    ``headers`` and everything after it is data. Truncation via ``limit``
    stops reading the input early.
    """
    headers: Optional[list[str]] = None
    rows: list[list[str]] = []
    offsets: list[int] = []
    for ordinal, (line, cells) in enumerate(_iter_rows(payload, format)):
        if header_row is not None:
            if ordinal < header_row:
                continue
            if ordinal == header_row:
                headers = cells
                continue
        rows.append(cells)
        offsets.append(line)
        if limit is not None and len(rows) >= limit:
            break
    if header_row is not None and headers is None:
        headers = []
    return TableData(headers=headers, rows=rows, source_offsets=offsets)


# ---------------------------------------------------------------------------
# Coercion

_TRUE_WORDS = frozenset({"true", "yes", "1"})
_FALSE_WORDS = frozenset({"false", "no", "0"})
_NON_FINITE = frozenset({"inf", "+inf", "-inf", "infinity", "+infinity", "-infinity", "nan", "+nan", "-nan"})


def coerce_value(
    cell: str, datatype: Datatype, format_hint: Optional[str] = None
) -> Any:
    """Coerce one cell to a typed value; empty cells (after trim) become None."""
    text = cell.strip()
    if text == "":
        return None
    if datatype == Datatype.STRING:
        return text
    if datatype == Datatype.INTEGER:
        digits = text.replace(",", "")
        if digits and (digits[0] in "+-" and digits[1:].isdigit() or digits.isdigit()):
            return int(digits)
        raise CoercionError(cell, datatype)
    if datatype == Datatype.FLOAT:
        digits = text.replace(",", "")
        if digits.lower() in _NON_FINITE:
            raise CoercionError(cell, datatype)
        try:
            value = float(digits)
        except ValueError:
            raise CoercionError(cell, datatype) from None
        if value != value or value in (float("inf"), float("-inf")):
            raise CoercionError(cell, datatype)
        return value
    if datatype == Datatype.BOOLEAN:
        word = text.lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise CoercionError(cell, datatype)
    if datatype == Datatype.DATE:
        try:
            if format_hint:
                return datetime.strptime(text, format_hint).date()
            return date.fromisoformat(text)
        except ValueError:
            raise CoercionError(cell, datatype) from None
    if datatype == Datatype.DATETIME:
        try:
            if format_hint:
                parsed = datetime.strptime(text, format_hint)
            else:
                parsed = parse_iso_datetime(text)
        except ValueError:
            raise CoercionError(cell, datatype) from None
        if parsed.tzinfo is None:
            parsed = parsed.replace(tzinfo=timezone.utc)
        return parsed.astimezone(timezone.utc)
    raise ValueError(f"unknown datatype {datatype!r}")


def _as_number(value: Any) -> Optional[float]:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    if not text or text.lower() in _NON_FINITE:
        return None
    try:
        return float(text)
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# Rule application


@dataclass
class RowOutcome:
    """Disposition of one data row: a record, filtered out, or failed."""

    disposition: str  # "record" | "filtered" | "error"
    cells: dict[str, tuple[str, Any]] = field(default_factory=dict)
    values: Optional[dict[str, Any]] = None
    errors: list[tuple[Optional[str], str]] = field(default_factory=list)

    def cells_json(self) -> dict:
        out = {}
        for name, (tag, payload) in self.cells.items():
            if tag == "ok":
                out[name] = {"value": canonical_scalar(payload)}
            else:
                out[name] = {"error": payload}
        return out


class RuleRunner:
    """A RuleSet prepared against one table's headers, ready to judge rows.

    Header-name sources are resolved case-insensitively here, once per table;
    integer sources are bounds-checked per row since ragged rows are allowed
    at parse time.
    """

    def __init__(
        self,
        rules: RuleSet,
        schema: DatasetSchema,
        headers: Optional[list[str]],
        registry: Optional[RuleRegistry] = None,
    ):
        registry = registry or DEFAULT_REGISTRY
        self.schema = schema
        self.headers = headers
        self.skip_count = 0
        self._filters: list[tuple[int, str, Any]] = []
        self._producers: dict[str, tuple[Rule, Any]] = {}
        for rule in rules.rules:
            spec = registry.get(rule.kind)
            if spec is None:
                raise TransformStructureError(f"unregistered rule kind {rule.kind!r}")
            if rule.kind == "skip_rows":
                self.skip_count = int(rule.params.get("count", 0))
                continue
            if rule.kind == "row_filter":
                op = rule.params["op"]
                col = self._resolve(rule.params["column"])
                self._filters.append((col, op, rule.params.get("operand")))
                continue
            attr = schema.get(rule.target_attribute or "")
            if attr is None:
                raise TransformStructureError(
                    f"rule targets unknown attribute {rule.target_attribute!r}"
                )
            if attr.name in self._producers:
                raise TransformStructureError(
                    f"multiple value rules for {attr.name}"
                )
            if rule.kind == "constant":
                self._producers[attr.name] = (rule, None)
            elif rule.kind in ("column_map", "date_parse"):
                self._producers[attr.name] = (rule, self._resolve(rule.params["source"]))
            else:
                # snap-in kind: registered applier produces the raw cell text
                if spec.apply is None:
                    raise TransformStructureError(
                        f"rule kind {rule.kind!r} has no applier"
                    )
                self._producers[attr.name] = (rule, spec.apply)

    def _resolve(self, source: Any) -> int:
        if isinstance(source, bool) or not isinstance(source, (int, str)):
            raise TransformStructureError(f"invalid source {source!r}")
        if isinstance(source, int):
            if source < 0:
                raise TransformStructureError(f"negative column index {source}")
            return source
        if self.headers is None:
            raise TransformStructureError(
                f"header-name source {source!r} requires a header row"
            )
        wanted = source.strip().casefold()
        for idx, header in enumerate(self.headers):
            if header.strip().casefold() == wanted:
                return idx
        raise TransformStructureError(f"unknown column header {source!r}")

    def evaluate(self, row: list[str]) -> RowOutcome:
        if not row:
            return RowOutcome(disposition="error", errors=[(None, "empty row")])
        for col, op, operand in self._filters:
            if col >= len(row):
                return RowOutcome(
                    disposition="error",
                    errors=[(None, f"filter column {col} out of range")],
                )
            if not _filter_passes(row[col], op, operand):
                return RowOutcome(disposition="filtered")
        outcome = RowOutcome(disposition="record")
        values: dict[str, Any] = {}
        for attr in self.schema.attributes:
            producer = self._producers.get(attr.name)
            if producer is None:
                values[attr.name] = None
                if attr.required:
                    outcome.cells[attr.name] = ("error", f"{attr.name} uncovered")
                else:
                    outcome.cells[attr.name] = ("ok", None)
                continue
            rule, resolved = producer
            try:
                value = self._produce(attr, rule, resolved, row)
            except CoercionError as exc:
                outcome.cells[attr.name] = ("error", str(exc))
                continue
            except IndexError:
                outcome.cells[attr.name] = (
                    "error",
                    f"column {resolved} out of range",
                )
                continue
            if value is None and attr.required:
                outcome.cells[attr.name] = (
                    "error",
                    f"null value for required {attr.name}",
                )
                continue
            outcome.cells[attr.name] = ("ok", value)
            values[attr.name] = value
        failed = [
            (name, msg)
            for name, (tag, msg) in outcome.cells.items()
            if tag == "error"
        ]
        if failed:
            outcome.disposition = "error"
            outcome.errors = failed
            return outcome
        outcome.values = values
        return outcome

    def _produce(
        self, attr: AttributeSpec, rule: Rule, resolved: Any, row: list[str]
    ) -> Any:
        if rule.kind == "constant":
            return _constant_value(rule.params.get("value"), attr)
        if rule.kind == "column_map":
            if resolved >= len(row):
                raise IndexError(resolved)
            return coerce_value(row[resolved], attr.datatype, attr.format_hint)
        if rule.kind == "date_parse":
            if resolved >= len(row):
                raise IndexError(resolved)
            pattern = rule.params.get("pattern") or attr.format_hint
            return coerce_value(row[resolved], attr.datatype, pattern)
        raw = resolved(row, self.headers, rule.params)
        if raw is None:
            return None
        return coerce_value(str(raw), attr.datatype, attr.format_hint)

    def run(
        self,
        rows: Iterable[list[str]],
        collect_outcomes: bool = False,
    ) -> tuple[TransformResult, list[tuple[int, RowOutcome]]]:
        result = TransformResult()
        outcomes: list[tuple[int, RowOutcome]] = []
        for index, row in enumerate(rows):
            if index < self.skip_count:
                continue
            outcome = self.evaluate(row)
            result.rows_read += 1
            if collect_outcomes:
                outcomes.append((index, outcome))
            if outcome.disposition == "filtered":
                result.rows_filtered += 1
            elif outcome.disposition == "error":
                for attr_name, message in outcome.errors:
                    entry: dict[str, Any] = {"source_row_index": index}
                    if attr_name is not None:
                        entry["attribute"] = attr_name
                    entry["message"] = message
                    result.row_errors.append(entry)
            else:
                result.records.append(
                    {"source_row_index": index, "values": outcome.values}
                )
        return result, outcomes


def _constant_value(raw: Any, attr: AttributeSpec) -> Any:
    if raw is None:
        return None
    if isinstance(raw, str):
        return coerce_value(raw, attr.datatype, attr.format_hint)
    if attr.datatype == Datatype.FLOAT and type(raw) is int:
        return float(raw)
    if attr.datatype == Datatype.BOOLEAN and type(raw) is bool:
        return raw
    if attr.datatype == Datatype.INTEGER and type(raw) is int and type(raw) is not bool:
        return raw
    if attr.datatype == Datatype.FLOAT and type(raw) is float:
        return raw
    raise CoercionError(repr(raw), attr.datatype)


def _filter_passes(cell: str, op: str, operand: Any) -> bool:
    text = cell.strip()
    if op == "not_empty":
        return text != ""
    if op == "contains":
        return str(operand) in text
    left_num = _as_number(text)
    right_num = _as_number(operand)
    if left_num is not None and right_num is not None:
        left: Any = left_num
        right: Any = right_num
    else:
        left, right = text, str(operand)
    if op == "eq":
        return left == right
    if op == "ne":
        return left != right
    if op == "lt":
        return left < right
    if op == "lte":
        return left <= right
    if op == "gt":
        return left > right
    if op == "gte":
        return left >= right
    raise TransformStructureError(f"unknown filter op {op!r}")


def apply_rules(
    table: TableData,
    rules: RuleSet,
    schema: DatasetSchema,
    registry: Optional[RuleRegistry] = None,
) -> TransformResult:
    """Transform a parsed table into schema-conforming value maps.

    Row-level problems are reported and isolated; only structural problems
    (unknown header, unregistered kind) abort the batch.
    """
    runner = RuleRunner(rules, schema, table.headers, registry)
    result, _ = runner.run(table.rows)
    return result


def apply_rules_streamed(
    payload: bytes,
    format: str,
    rules: RuleSet,
    schema: DatasetSchema,
    registry: Optional[RuleRegistry] = None,
) -> TransformResult:
    """parse + apply without materializing the parsed table.

    Memory stays bounded by one row plus the output, which is what ingestion
    wants for large resources.
    """
    row_iter = _iter_rows(payload, format)
    headers: Optional[list[str]] = None
    header_row = rules.header_row
    if header_row is not None:
        headers = []
        for ordinal, (_, cells) in enumerate(row_iter):
            if ordinal == header_row:
                headers = cells
                break
    runner = RuleRunner(rules, schema, headers, registry)
    result, _ = runner.run(cells for _, cells in row_iter)
    return result


def preview(
    payload: bytes,
    format: str,
    rules: RuleSet,
    schema: DatasetSchema,
    limit: int,
    registry: Optional[RuleRegistry] = None,
) -> tuple[TableData, TransformResult]:
    """Parse and transform only the first ``limit`` data rows. Side-effect free."""
    if limit < 1:
        raise ValueError("preview limit must be >= 1")
    table = parse_table(payload, format, rules.header_row, limit=limit)
    return table, apply_rules(table, rules, schema, registry)
