"""Deterministic fisheries market fixtures for tests, demos and the UI.

Thirty daily wholesale-market CSV files, four columns each, with a small
controlled fraction of deliberately broken rows. Everything is seeded, so
the expected clean-record set is computable up front and the same on every
run. A second layout with shuffled column order, different header names and
a different date format exercises multi-pool aggregation over heterogeneous
sources.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import date as date_type
from datetime import timedelta
from typing import Any, Optional

from .model import DatasetSchema, schema_from_json
from .rules import Rule, RuleSet

__all__ = [
    "FISHERIES_SCHEMA_JSON",
    "SPECIES",
    "DailyFile",
    "fisheries_schema",
    "fisheries_rules_a",
    "fisheries_rules_b",
    "make_daily_files",
    "make_layout_b_file",
]

SPECIES = [
    "Carite",
    "Kingfish",
    "Gulf, King",
    "Red Snapper",
    "Flyingfish",
    "Cavalli",
    "Shark",
    "Herring",
]

FISHERIES_SCHEMA_JSON: dict = {
    "attributes": [
        {"name": "date", "datatype": "date", "description": "market report day"},
        {"name": "species", "datatype": "string", "description": "produce name as printed"},
        {"name": "price", "datatype": "float", "description": "price per kg, TTD"},
        {"name": "volume_kg", "datatype": "integer", "description": "kilograms sold"},
    ]
}

START_DAY = date_type(2016, 3, 1)

# cell-level corruptions a real market report plausibly contains
_BAD_VARIANTS = ("price", "date", "species", "volume")


def fisheries_schema() -> DatasetSchema:
    return schema_from_json(FISHERIES_SCHEMA_JSON)


def fisheries_rules_a() -> RuleSet:
    """Rules for the native layout: Date d/m/Y, Produce, Price, Volume."""
    return RuleSet(
        header_row=0,
        rules=(
            Rule("date_parse", "date", {"source": "Date", "pattern": "%d/%m/%Y"}),
            Rule("column_map", "species", {"source": "Produce"}),
            Rule("column_map", "price", {"source": "Price"}),
            Rule("column_map", "volume_kg", {"source": "Volume"}),
        ),
        version=1,
    )


def fisheries_rules_b() -> RuleSet:
    """Rules for the alternate layout: ISO dates, shuffled column order."""
    return RuleSet(
        header_row=0,
        rules=(
            Rule("date_parse", "date", {"source": "Report Date"}),
            Rule("column_map", "species", {"source": "Species"}),
            Rule("column_map", "price", {"source": "Unit Price"}),
            Rule("column_map", "volume_kg", {"source": "Kg Sold"}),
        ),
        version=1,
    )


@dataclass
class DailyFile:
    """One generated source file plus its expected outcome."""

    name: str
    text: str
    clean_rows: list[dict]  # typed value maps the transform should produce
    bad_row_count: int


def _csv_field(value: str) -> str:
    if any(ch in value for ch in ",\"\n"):
        return '"' + value.replace('"', '""') + '"'
    return value


def _row_values(rng: random.Random, day: date_type, force_species: Optional[str] = None) -> dict:
    species = force_species or rng.choice(SPECIES)
    return {
        "date": day,
        "species": species,
        "price": round(rng.uniform(5.0, 60.0), 2),
        "volume_kg": rng.randint(10, 500),
    }


def _corrupt(cells: dict[str, str], variant: str) -> dict[str, str]:
    broken = dict(cells)
    if variant == "price":
        broken["price"] = "n/a"
    elif variant == "date":
        broken["date"] = "99/99/2016"
    elif variant == "species":
        broken["species"] = ""
    else:
        broken["volume"] = "lots"
    return broken


def make_daily_files(
    days: int = 30,
    rows_per_file: int = 20,
    bad_fraction: float = 0.02,
    seed: int = 20160301,
) -> list[DailyFile]:
    """Generate the daily report series in the native layout.

    Exactly round(days*rows_per_file*bad_fraction) rows are corrupted, never
    the first row of a file: row 0 is always a clean Carite row so every day
    contributes a point to the species trend series.
    """
    rng = random.Random(seed)
    total_bad = round(days * rows_per_file * bad_fraction)
    slots = [(f, r) for f in range(days) for r in range(1, rows_per_file)]
    bad_slots = dict.fromkeys(rng.sample(slots, total_bad))
    for i, slot in enumerate(bad_slots):
        bad_slots[slot] = _BAD_VARIANTS[i % len(_BAD_VARIANTS)]

    files: list[DailyFile] = []
    for f in range(days):
        day = START_DAY + timedelta(days=f)
        lines = ["Date,Produce,Price,Volume"]
        clean: list[dict] = []
        bad_count = 0
        for r in range(rows_per_file):
            values = _row_values(rng, day, force_species="Carite" if r == 0 else None)
            cells = {
                "date": day.strftime("%d/%m/%Y"),
                "species": values["species"],
                "price": repr(values["price"]),
                "volume": str(values["volume_kg"]),
            }
            variant = bad_slots.get((f, r))
            if variant is not None:
                cells = _corrupt(cells, variant)
                bad_count += 1
            else:
                clean.append(values)
            lines.append(
                ",".join(
                    _csv_field(c)
                    for c in (cells["date"], cells["species"], cells["price"], cells["volume"])
                )
            )
        files.append(
            DailyFile(
                name=f"fish_{day.isoformat().replace('-', '_')}.csv",
                text="\n".join(lines) + "\n",
                clean_rows=clean,
                bad_row_count=bad_count,
            )
        )
    return files


def make_layout_b_file(
    day_offset: int = 40,
    rows: int = 25,
    seed: int = 777,
) -> DailyFile:
    """One report in the alternate layout (ISO dates, shuffled columns)."""
    rng = random.Random(seed)
    day = START_DAY + timedelta(days=day_offset)
    lines = ["Species,Kg Sold,Unit Price,Report Date"]
    clean: list[dict] = []
    for _ in range(rows):
        values = _row_values(rng, day)
        clean.append(values)
        lines.append(
            ",".join(
                _csv_field(c)
                for c in (
                    values["species"],
                    str(values["volume_kg"]),
                    repr(values["price"]),
                    day.isoformat(),
                )
            )
        )
    return DailyFile(
        name=f"market_{day.isoformat()}.csv",
        text="\n".join(lines) + "\n",
        clean_rows=clean,
        bad_row_count=0,
    )


def write_files(directory: Any, files: list[DailyFile]) -> list[str]:
    """Write generated files under a directory; returns the paths."""
    from pathlib import Path

    base = Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    paths = []
    for f in files:
        target = base / f.name
        target.write_text(f.text, encoding="utf-8")
        paths.append(str(target))
    return paths
