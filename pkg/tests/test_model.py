"""Schema contract, record conformance, canonical formats, identifiers."""

from __future__ import annotations

from datetime import date, datetime, timezone

import pytest

from datameld.model import (
    AttributeSpec,
    CkanLinkOrigin,
    Datatype,
    DatasetSchema,
    SchemaError,
    UploadOrigin,
    UrlOrigin,
    canonical_scalar,
    conform_record,
    csv_cell,
    new_id,
    origin_from_json,
    parse_iso_datetime,
    schema_from_json,
    timestamp_from_json,
    timestamp_to_json,
    validate_schema,
    values_from_json,
    values_to_json,
    with_updated,
)
from datameld.sampledata import fisheries_schema


def attr(name: str, datatype: Datatype, **kw) -> AttributeSpec:
    return AttributeSpec(name=name, datatype=datatype, **kw)


class TestValidateSchema:
    def test_well_formed_schema_has_no_violations(self):
        schema = DatasetSchema(
            attributes=(
                attr("date", Datatype.DATE),
                attr("species", Datatype.STRING),
                attr("price", Datatype.FLOAT),
            )
        )
        assert validate_schema(schema) == []

    def test_empty_attribute_list_is_a_violation(self):
        assert validate_schema(DatasetSchema(attributes=())) == [
            "empty attribute list"
        ]

    def test_duplicate_attribute_name_reported(self):
        schema = DatasetSchema(
            attributes=(attr("x", Datatype.STRING), attr("x", Datatype.INTEGER))
        )
        assert validate_schema(schema) == ["duplicate name x"]

    @pytest.mark.parametrize("bad", ["9lives", "price kg", "", "a-b", "π"])
    def test_names_must_be_identifiers(self, bad):
        schema = DatasetSchema(attributes=(attr(bad, Datatype.STRING),))
        violations = validate_schema(schema)
        assert violations == [f"invalid attribute name {bad!r}"]

    def test_underscore_leading_name_is_fine(self):
        schema = DatasetSchema(attributes=(attr("_v2", Datatype.STRING),))
        assert validate_schema(schema) == []

    def test_format_hint_only_on_temporal_attributes(self):
        schema = DatasetSchema(
            attributes=(attr("price", Datatype.FLOAT, format_hint="%d/%m/%Y"),)
        )
        assert validate_schema(schema) == [
            "format_hint on price requires a date or datetime attribute"
        ]

    def test_format_hint_accepted_on_date_and_datetime(self):
        schema = DatasetSchema(
            attributes=(
                attr("d", Datatype.DATE, format_hint="%d/%m/%Y"),
                attr("t", Datatype.DATETIME, format_hint="%Y-%m-%d %H:%M"),
            )
        )
        assert validate_schema(schema) == []

    def test_all_violations_reported_together(self):
        schema = DatasetSchema(
            attributes=(
                attr("x", Datatype.STRING),
                attr("x", Datatype.INTEGER),
                attr("bad name", Datatype.FLOAT),
            ),
            version=0,
        )
        violations = validate_schema(schema)
        assert "duplicate name x" in violations
        assert "invalid attribute name 'bad name'" in violations
        assert "schema version must be >= 1" in violations
        assert len(violations) == 3


class TestConformRecord:
    def test_conforming_record(self):
        values = {
            "date": date(2016, 3, 1),
            "species": "Carite",
            "price": 30.0,
            "volume_kg": 120,
        }
        assert conform_record(values, fisheries_schema()) == []

    def test_missing_attributes_each_reported(self):
        schema = DatasetSchema(
            attributes=(
                attr("date", Datatype.DATE),
                attr("species", Datatype.STRING),
                attr("price", Datatype.FLOAT),
            )
        )
        violations = conform_record({"species": "Carite"}, schema)
        assert violations == ["missing date", "missing price"]

    def test_type_mismatch_named_by_attribute(self):
        schema = DatasetSchema(attributes=(attr("date", Datatype.DATE),))
        assert conform_record({"date": "2016-03-01"}, schema) == [
            "type mismatch: date"
        ]

    def test_unexpected_attribute_rejected(self):
        schema = DatasetSchema(attributes=(attr("a", Datatype.STRING),))
        assert conform_record({"a": "x", "b": "y"}, schema) == [
            "unexpected attribute b"
        ]

    def test_null_rejected_for_required_allowed_for_optional(self):
        schema = DatasetSchema(
            attributes=(
                attr("a", Datatype.STRING),
                attr("b", Datatype.FLOAT, required=False),
            )
        )
        assert conform_record({"a": None, "b": None}, schema) == [
            "null value for required a"
        ]
        assert conform_record({"a": "x", "b": None}, schema) == []

    def test_bool_is_not_an_integer_and_datetime_not_a_date(self):
        schema = DatasetSchema(
            attributes=(attr("n", Datatype.INTEGER), attr("d", Datatype.DATE))
        )
        values = {"n": True, "d": datetime(2016, 3, 1, tzinfo=timezone.utc)}
        violations = conform_record(values, schema)
        assert sorted(violations) == ["type mismatch: d", "type mismatch: n"]

    def test_int_is_not_a_float(self):
        schema = DatasetSchema(attributes=(attr("price", Datatype.FLOAT),))
        assert conform_record({"price": 30}, schema) == ["type mismatch: price"]

    def test_pure_same_input_same_output(self):
        schema = fisheries_schema()
        values = {"species": "Carite"}
        first = conform_record(values, schema)
        second = conform_record(values, schema)
        assert first == second
        assert values == {"species": "Carite"}  # input untouched


class TestSchemaJson:
    def test_round_trip_preserves_everything(self):
        schema = DatasetSchema(
            attributes=(
                attr("d", Datatype.DATE, required=False, format_hint="%d/%m/%Y",
                     description="report day"),
                attr("n", Datatype.INTEGER),
            ),
            version=3,
        )
        assert schema_from_json(schema.to_json()) == schema

    def test_defaults_fill_in(self):
        schema = schema_from_json(
            {"attributes": [{"name": "a", "datatype": "string"}]}
        )
        spec = schema.attributes[0]
        assert spec.required is True
        assert spec.format_hint is None
        assert schema.version == 1

    def test_unknown_datatype_collected(self):
        with pytest.raises(SchemaError) as err:
            schema_from_json(
                {"attributes": [{"name": "a", "datatype": "decimal"}]}
            )
        assert "unknown datatype 'decimal' on a" in err.value.violations

    def test_multiple_violations_collected_in_one_error(self):
        with pytest.raises(SchemaError) as err:
            schema_from_json(
                {
                    "attributes": [
                        {"name": "x", "datatype": "string"},
                        {"name": "x", "datatype": "integer"},
                        {"name": "ok", "datatype": "float", "format_hint": "%Y"},
                    ]
                }
            )
        assert "duplicate name x" in err.value.violations
        assert (
            "format_hint on ok requires a date or datetime attribute"
            in err.value.violations
        )

    def test_non_object_payload_rejected(self):
        with pytest.raises(SchemaError):
            schema_from_json(["not", "a", "schema"])


class TestCanonicalValues:
    def test_scalar_forms(self):
        assert canonical_scalar(None) is None
        assert canonical_scalar("Carite") == "Carite"
        assert canonical_scalar(120) == 120
        assert canonical_scalar(30.0) == 30.0
        assert canonical_scalar(True) is True
        assert canonical_scalar(date(2016, 3, 1)) == "2016-03-01"
        assert (
            canonical_scalar(datetime(2016, 3, 1, 6, 30, tzinfo=timezone.utc))
            == "2016-03-01T06:30:00Z"
        )

    def test_csv_cells(self):
        assert csv_cell(None) == ""
        assert csv_cell(True) == "true"
        assert csv_cell(False) == "false"
        assert csv_cell(30.0) == "30.0"
        assert csv_cell(0.1) == "0.1"
        assert csv_cell(1e-05) == "1e-05"
        assert csv_cell(120) == "120"
        assert csv_cell(date(2016, 3, 1)) == "2016-03-01"
        assert csv_cell("Gulf, King") == "Gulf, King"  # quoting is the writer's job

    def test_datetime_cells_are_utc_with_z(self):
        ts = datetime(2016, 3, 1, 12, 0, 0, 250000, tzinfo=timezone.utc)
        assert csv_cell(ts) == "2016-03-01T12:00:00.250000Z"

    def test_values_round_trip_through_json(self):
        schema = DatasetSchema(
            attributes=(
                attr("d", Datatype.DATE),
                attr("t", Datatype.DATETIME),
                attr("f", Datatype.FLOAT),
                attr("n", Datatype.INTEGER),
                attr("b", Datatype.BOOLEAN),
                attr("s", Datatype.STRING, required=False),
            )
        )
        values = {
            "d": date(2016, 3, 2),
            "t": datetime(2016, 3, 2, 18, 45, 9, tzinfo=timezone.utc),
            "f": 12.75,
            "n": 44,
            "b": False,
            "s": None,
        }
        payload = values_to_json(values, schema)
        assert list(payload) == ["d", "t", "f", "n", "b", "s"]  # schema order
        assert payload["t"] == "2016-03-02T18:45:09Z"
        assert payload["s"] is None
        assert values_from_json(payload, schema) == values


class TestTimestamps:
    def test_z_suffix_parses_and_serializes(self):
        ts = parse_iso_datetime("2016-03-01T06:00:00Z")
        assert ts == datetime(2016, 3, 1, 6, 0, tzinfo=timezone.utc)
        assert timestamp_to_json(ts) == "2016-03-01T06:00:00Z"

    def test_naive_input_taken_as_utc(self):
        ts = parse_iso_datetime("2016-03-01T06:00:00")
        assert ts.tzinfo == timezone.utc

    def test_offset_input_normalized_to_utc(self):
        ts = parse_iso_datetime("2016-03-01T02:00:00-04:00")
        assert timestamp_to_json(ts) == "2016-03-01T06:00:00Z"

    def test_none_passthrough(self):
        assert timestamp_to_json(None) is None
        assert timestamp_from_json(None) is None


class TestIdentifiers:
    def test_ids_are_26_chars_from_crockford_alphabet(self):
        allowed = set("0123456789ABCDEFGHJKMNPQRSTVWXYZ")
        for _ in range(200):
            value = new_id()
            assert len(value) == 26
            assert set(value) <= allowed

    def test_ids_do_not_collide(self):
        batch = {new_id() for _ in range(5000)}
        assert len(batch) == 5000


class TestOrigins:
    @pytest.mark.parametrize(
        "origin",
        [
            UploadOrigin(filename="fish_2016_03_01.csv"),
            UrlOrigin(url="https://data.example.net/fish.csv"),
            CkanLinkOrigin(base_url="https://portal.example.net", ckan_resource_id="abc-123"),
        ],
    )
    def test_round_trip(self, origin):
        assert origin_from_json(origin.to_json()) == origin

    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError):
            origin_from_json({"type": "carrier-pigeon"})


class TestEntities:
    def test_user_json_never_contains_credential_digest(self, user):
        payload = user.to_json()
        assert "credential_digest" not in payload
        assert "credential" not in str(payload)

    def test_with_updated_refreshes_updated_at(self, dataset):
        bumped = with_updated(dataset, title="Renamed")
        assert bumped.title == "Renamed"
        assert bumped.updated_at >= dataset.updated_at
        assert bumped.created_at == dataset.created_at

    def test_dataset_json_shape(self, dataset):
        payload = dataset.to_json()
        assert payload["title"] == "Wholesale fish markets"
        assert payload["tags"] == ["fisheries"]  # sorted list, not a set
        assert payload["schema"]["attributes"][0]["name"] == "date"
        assert payload["owner"] == dataset.owner

    def test_record_json_is_schema_ordered_with_provenance(self, dataset):
        from datameld.model import DataRecord, Provenance, utcnow

        record = DataRecord(
            dataset_id=dataset.id,
            values={
                "species": "Carite",
                "date": date(2016, 3, 1),
                "price": 30.0,
                "volume_kg": 120,
            },
            provenance=Provenance(resource_id="r1", source_row_index=4),
            ingested_at=utcnow(),
        )
        payload = record.to_json(dataset.schema)
        assert list(payload["values"]) == ["date", "species", "price", "volume_kg"]
        assert payload["provenance"] == {"resource_id": "r1", "source_row_index": 4}
