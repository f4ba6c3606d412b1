"""The shipped format contract: schema files and example files stay valid.

Three guarantees: the JSON Schemas themselves are well-formed, every shipped
JSON example (and the golden model fixture) validates against its schema,
and every example file survives a read -> write cycle byte-for-byte, so the
repo copies can never drift from what the writers actually produce.
"""

import json
from pathlib import Path

import pytest

from mixcast import (
    read_components,
    read_conditions,
    read_generator_config,
    read_grid,
    read_model,
    read_profiles,
    read_trace,
    read_tuning_report,
    write_components,
    write_conditions,
    write_generator_config,
    write_grid,
    write_model,
    write_profiles,
    write_trace,
    write_tuning_report,
)

REPO = Path(__file__).parent.parent
SCHEMAS = REPO / "schemas"
EXAMPLES = SCHEMAS / "examples"
GOLDEN_MODEL = Path(__file__).parent / "data" / "model_golden.json"

jsonschema = pytest.importorskip("jsonschema")

SCHEMA_PAIRS = [
    ("model.schema.json", EXAMPLES / "model.json"),
    ("tuning-report.schema.json", EXAMPLES / "tuning-report.json"),
    ("generator-config.schema.json", EXAMPLES / "generator-config.json"),
]


class TestSchemas:
    @pytest.mark.parametrize("schema_name", [name for name, _ in SCHEMA_PAIRS])
    def test_schema_is_itself_valid(self, schema_name):
        schema = json.loads((SCHEMAS / schema_name).read_text(encoding="utf-8"))
        jsonschema.Draft202012Validator.check_schema(schema)

    @pytest.mark.parametrize("schema_name,example", SCHEMA_PAIRS)
    def test_example_validates(self, schema_name, example):
        schema = json.loads((SCHEMAS / schema_name).read_text(encoding="utf-8"))
        document = json.loads(example.read_text(encoding="utf-8"))
        jsonschema.Draft202012Validator(schema).validate(document)

    def test_golden_model_fixture_validates(self):
        schema = json.loads((SCHEMAS / "model.schema.json").read_text(encoding="utf-8"))
        document = json.loads(GOLDEN_MODEL.read_text(encoding="utf-8"))
        jsonschema.Draft202012Validator(schema).validate(document)


ROUND_TRIPS = [
    ("model.json", read_model, write_model),
    ("profiles.csv", read_profiles, write_profiles),
    ("conditions.csv", read_conditions, write_conditions),
    ("components.csv", read_components, write_components),
    ("trace.csv", read_trace, write_trace),
    ("grid.csv", read_grid, write_grid),
    ("tuning-report.json", read_tuning_report, write_tuning_report),
    ("generator-config.json", read_generator_config, write_generator_config),
]


class TestExamplesRoundTrip:
    @pytest.mark.parametrize(
        "name,reader,writer", ROUND_TRIPS, ids=[n for n, _, _ in ROUND_TRIPS]
    )
    def test_read_write_is_byte_identical(self, name, reader, writer, tmp_path):
        source = EXAMPLES / name
        copy = tmp_path / name
        writer(reader(source), copy)
        assert copy.read_bytes() == source.read_bytes()

    def test_ensemble_example_cells_are_exact_floats(self):
        # No reader exists for ensemble files (they are an export format),
        # so pin the shape instead: header labels the steps after the
        # observed prefix, and every cell is a shortest round-trip float.
        lines = (EXAMPLES / "ensemble.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0].split(",")[:2] == ["instance_id", "trace"]
        steps = lines[0].split(",")[2:]
        assert steps and all(label.startswith("t") for label in steps)
        for line in lines[1:]:
            cells = line.split(",")
            assert len(cells) == 2 + len(steps)
            for cell in cells[2:]:
                assert repr(float(cell)) == cell
