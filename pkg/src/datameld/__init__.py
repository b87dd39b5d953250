"""Schema-first aggregation platform for consumer-oriented open data.

Publishers define a dataset schema, group raw CSV/TSV resources into pools,
and attach per-pool transformation rules; ingestion merges everything into
one queryable collection served over a read-only HTTP API with JSON and CSV
export. See README.md for the full tour.
"""

from .model import (
    AttributeSpec,
    DataRecord,
    Dataset,
    DatasetSchema,
    Datatype,
    Provenance,
    Resource,
    ResourcePool,
    SchemaError,
    User,
    conform_record,
    validate_schema,
)
from .rules import Rule, RuleInput, RuleReport, RuleSet, generate_rules, validate_rules
from .store import Filter, QuerySpec, SortKey, Storage
from .transform import apply_rules, coerce_value, parse_table

__version__ = "0.1.0"

__all__ = [
    "AttributeSpec",
    "DataRecord",
    "Dataset",
    "DatasetSchema",
    "Datatype",
    "Provenance",
    "Resource",
    "ResourcePool",
    "SchemaError",
    "User",
    "conform_record",
    "validate_schema",
    "Rule",
    "RuleInput",
    "RuleReport",
    "RuleSet",
    "generate_rules",
    "validate_rules",
    "Filter",
    "QuerySpec",
    "SortKey",
    "Storage",
    "apply_rules",
    "coerce_value",
    "parse_table",
    "__version__",
]
