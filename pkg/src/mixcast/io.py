"""Bit-exact serialization of forecasts, datasets, ensembles, and results.

Two carriers cover everything:

* JSON documents for structured objects — mixture models (many instances
  sharing pattern dictionaries), tuning reports, generator configs;
* comma-delimited tables with a header row for rectangular data — daily
  profiles, condition vectors, generating-component records, sampled
  ensembles, performance traces, and waterfall grids.

Floats are serialized as their shortest round-trippable decimal form, so a
write/read cycle reproduces every value bit-for-bit.  Writers are
deterministic (same inputs, same bytes) and order rows by instance id and
ascending indices.  Readers validate strictly and reject rather than
coerce: unknown fields, ragged rows, duplicate ids, non-numeric or
non-finite cells all raise with the offending location.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .covariance import (
    DenseCovariance,
    DiagonalCovariance,
    PatternDictionary,
    PdccCovariance,
)
from .errors import (
    DanglingDictionaryRef,
    DuplicateId,
    FormatError,
    NonFiniteInput,
    ParseError,
    RaggedRow,
    ShapeMismatch,
    ValidationError,
    VersionMismatch,
)
from .generator import GeneratorConfig
from .metrics import PerformanceTrace, WaterfallGrid
from .mixture import MixtureForecast, MvnComponent
from .sampling import Ensemble
from .tuning import TuningReport

__all__ = [
    "MODEL_FORMAT",
    "MODEL_VERSION",
    "REPORT_FORMAT",
    "REPORT_VERSION",
    "read_model",
    "write_model",
    "read_profiles",
    "write_profiles",
    "read_conditions",
    "write_conditions",
    "read_components",
    "write_components",
    "write_ensemble",
    "read_trace",
    "write_trace",
    "read_grid",
    "write_grid",
    "read_tuning_report",
    "write_tuning_report",
    "read_generator_config",
    "write_generator_config",
]

MODEL_FORMAT = "gmm-forecast"
MODEL_VERSION = 1
REPORT_FORMAT = "tuning-report"
REPORT_VERSION = 1

PathLike = Union[str, Path]


# ---------------------------------------------------------------------------
# JSON plumbing: strict field handling with $-path locations.


def _load_json(path: PathLike):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, location=f"line {exc.lineno}, column {exc.colno}") from exc


def _dump_json(doc, path: PathLike) -> None:
    try:
        text = json.dumps(doc, indent=2, allow_nan=False)
    except ValueError as exc:
        raise NonFiniteInput(f"refusing to serialize non-finite value: {exc}") from exc
    Path(path).write_text(text + "\n", encoding="utf-8")


def _expect_object(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ParseError(f"expected an object, got {type(node).__name__}", location=path)
    return dict(node)


def _expect_list(node, path: str) -> list:
    if not isinstance(node, list):
        raise ParseError(f"expected an array, got {type(node).__name__}", location=path)
    return node


def _take(obj: dict, key: str, path: str, required: bool = True, default=None):
    if key not in obj:
        if required:
            raise ParseError("missing required field", location=f"{path}.{key}")
        return default
    return obj.pop(key)


def _reject_unknown(obj: dict, path: str) -> None:
    if obj:
        key = sorted(obj)[0]
        raise ParseError("unknown field", location=f"{path}.{key}")


def _expect_str(node, path: str) -> str:
    if not isinstance(node, str) or not node:
        raise ParseError("expected a non-empty string", location=path)
    return node


def _expect_int(node, path: str) -> int:
    if isinstance(node, bool) or not isinstance(node, int):
        raise ParseError(f"expected an integer, got {type(node).__name__}", location=path)
    return node


def _expect_float(node, path: str) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ParseError(f"expected a number, got {type(node).__name__}", location=path)
    value = float(node)
    if not math.isfinite(value):
        raise ParseError("expected a finite number", location=path)
    return value


def _float_vector(node, path: str) -> np.ndarray:
    items = _expect_list(node, path)
    return np.array([_expect_float(x, f"{path}[{i}]") for i, x in enumerate(items)])


def _float_matrix(node, path: str) -> np.ndarray:
    rows = _expect_list(node, path)
    if not rows:
        raise ParseError("matrix must have at least one row", location=path)
    parsed = [_float_vector(row, f"{path}[{i}]") for i, row in enumerate(rows)]
    width = parsed[0].size
    for i, row in enumerate(parsed):
        if row.size != width:
            raise ParseError(
                f"row has {row.size} entries, expected {width}", location=f"{path}[{i}]"
            )
    return np.stack(parsed)


def _wrap_invalid(exc: ValidationError, path: str) -> ParseError:
    return ParseError(str(exc), location=path)


# ---------------------------------------------------------------------------
# Model files.


def _parse_covariance(node, path: str, horizon: int, dictionaries: dict):
    cov = _expect_object(node, path)
    kind = _expect_str(_take(cov, "kind", path), f"{path}.kind")
    if kind == "diag":
        sigma = _float_vector(_take(cov, "sigma", path), f"{path}.sigma")
        _reject_unknown(cov, path)
        if sigma.size != horizon:
            raise ParseError(
                f"sigma has {sigma.size} entries, expected horizon {horizon}",
                location=f"{path}.sigma",
            )
        try:
            return DiagonalCovariance(sigma=sigma)
        except FormatError:
            raise
        except ValidationError as exc:
            raise _wrap_invalid(exc, path) from exc
    if kind == "pdcc":
        ref = _expect_str(_take(cov, "dictionary", path), f"{path}.dictionary")
        aux = _float_vector(_take(cov, "aux_sigma", path), f"{path}.aux_sigma")
        _reject_unknown(cov, path)
        if ref not in dictionaries:
            raise DanglingDictionaryRef(
                f"{path}.dictionary: no dictionary with id {ref!r} is defined"
            )
        dictionary, ridge = dictionaries[ref]
        try:
            return PdccCovariance(dictionary=dictionary, aux_sigma=aux, ridge=ridge)
        except FormatError:
            raise
        except ValidationError as exc:
            raise _wrap_invalid(exc, path) from exc
    if kind == "dense":
        matrix = _float_matrix(_take(cov, "matrix", path), f"{path}.matrix")
        _reject_unknown(cov, path)
        if matrix.shape != (horizon, horizon):
            raise ParseError(
                f"matrix has shape {matrix.shape}, expected ({horizon}, {horizon})",
                location=f"{path}.matrix",
            )
        try:
            return DenseCovariance(matrix=matrix)
        except FormatError:
            raise
        except ValidationError as exc:
            raise _wrap_invalid(exc, path) from exc
    raise ParseError(
        f"unknown covariance kind {kind!r} (expected diag, pdcc, or dense)",
        location=f"{path}.kind",
    )


def read_model(path: PathLike) -> list[MixtureForecast]:
    """Parse a model file into its forecasts (one per instance)."""
    root = _expect_object(_load_json(path), "$")
    fmt = _expect_str(_take(root, "format", "$"), "$.format")
    if fmt != MODEL_FORMAT:
        raise ParseError(f"unsupported document format {fmt!r}", location="$.format")
    version = _expect_int(_take(root, "version", "$"), "$.version")
    if version != MODEL_VERSION:
        raise VersionMismatch(
            f"model format version {version} is not supported (expected {MODEL_VERSION})"
        )
    horizon = _expect_int(_take(root, "horizon", "$"), "$.horizon")
    if horizon < 1:
        raise ParseError("horizon must be >= 1", location="$.horizon")

    dictionaries: dict[str, tuple[PatternDictionary, float]] = {}
    for i, node in enumerate(_take(root, "dictionaries", "$", required=False, default=[])):
        path_i = f"$.dictionaries[{i}]"
        block = _expect_object(node, path_i)
        dict_id = _expect_str(_take(block, "id", path_i), f"{path_i}.id")
        ridge = _expect_float(_take(block, "ridge", path_i), f"{path_i}.ridge")
        matrix = _float_matrix(_take(block, "matrix", path_i), f"{path_i}.matrix")
        _reject_unknown(block, path_i)
        if dict_id in dictionaries:
            raise DuplicateId(f"dictionary id {dict_id!r} is defined more than once")
        if matrix.shape[0] != horizon:
            raise ParseError(
                f"matrix has {matrix.shape[0]} rows, expected horizon {horizon}",
                location=f"{path_i}.matrix",
            )
        try:
            dictionary = PatternDictionary(id=dict_id, u=matrix)
        except ValidationError as exc:
            raise _wrap_invalid(exc, path_i) from exc
        if ridge < 0:
            raise ParseError("ridge must be >= 0", location=f"{path_i}.ridge")
        dictionaries[dict_id] = (dictionary, ridge)

    forecasts = []
    seen_ids: set[str] = set()
    for j, node in enumerate(_expect_list(_take(root, "instances", "$"), "$.instances")):
        path_j = f"$.instances[{j}]"
        entry = _expect_object(node, path_j)
        instance_id = _expect_str(_take(entry, "id", path_j), f"{path_j}.id")
        if instance_id in seen_ids:
            raise DuplicateId(f"instance id {instance_id!r} appears more than once")
        seen_ids.add(instance_id)
        condition_node = _take(entry, "condition", path_j, required=False)
        condition = (
            None
            if condition_node is None
            else _float_vector(condition_node, f"{path_j}.condition")
        )
        k = _expect_int(_take(entry, "k", path_j), f"{path_j}.k")
        if k < 1:
            raise ParseError("k must be >= 1", location=f"{path_j}.k")
        component_nodes = _expect_list(
            _take(entry, "components", path_j), f"{path_j}.components"
        )
        if len(component_nodes) != k:
            raise ParseError(
                f"{len(component_nodes)} components listed but k = {k}",
                location=f"{path_j}.components",
            )
        weights_node = _take(entry, "weights", path_j, required=False)
        _reject_unknown(entry, path_j)

        components = []
        for m, comp_node in enumerate(component_nodes):
            path_m = f"{path_j}.components[{m}]"
            comp = _expect_object(comp_node, path_m)
            mean = _float_vector(_take(comp, "mean", path_m), f"{path_m}.mean")
            if mean.size != horizon:
                raise ParseError(
                    f"mean has {mean.size} entries, expected horizon {horizon}",
                    location=f"{path_m}.mean",
                )
            cov = _parse_covariance(
                _take(comp, "cov", path_m), f"{path_m}.cov", horizon, dictionaries
            )
            _reject_unknown(comp, path_m)
            components.append(MvnComponent(mean=mean, cov=cov))

        try:
            if weights_node is None:
                forecast = MixtureForecast.uniform(
                    components, instance_id=instance_id, condition=condition
                )
            else:
                weights = _float_vector(weights_node, f"{path_j}.weights")
                forecast = MixtureForecast(
                    horizon=horizon,
                    components=tuple(components),
                    weights=weights,
                    instance_id=instance_id,
                    condition=condition,
                )
        except FormatError:
            raise
        except ValidationError as exc:
            raise _wrap_invalid(exc, path_j) from exc
        forecasts.append(forecast)
    _reject_unknown(root, "$")
    return forecasts


def _collect_dictionaries(forecasts: Sequence[MixtureForecast]):
    registry: dict[str, tuple[PatternDictionary, float]] = {}
    for fc in forecasts:
        for comp in fc.components:
            cov = comp.cov
            if not isinstance(cov, PdccCovariance):
                continue
            dict_id = cov.dictionary.id
            if dict_id in registry:
                known, ridge = registry[dict_id]
                if known is not cov.dictionary and not np.array_equal(known.u, cov.dictionary.u):
                    raise DuplicateId(
                        f"two different dictionaries share id {dict_id!r}"
                    )
                if ridge != cov.ridge:
                    raise ValidationError(
                        f"pdcc covariances sharing dictionary {dict_id!r} disagree on "
                        f"ridge ({ridge} vs {cov.ridge})"
                    )
            else:
                registry[dict_id] = (cov.dictionary, cov.ridge)
    return registry


def _condition_to_json(condition, instance_id: str):
    if condition is None:
        return None
    arr = np.asarray(condition, dtype=np.float64).reshape(-1)
    if not np.isfinite(arr).all():
        raise NonFiniteInput(f"condition of instance {instance_id!r} is not finite")
    return arr.tolist()


def _covariance_to_json(cov) -> dict:
    if isinstance(cov, DiagonalCovariance):
        return {"kind": "diag", "sigma": cov.sigma.tolist()}
    if isinstance(cov, PdccCovariance):
        return {
            "kind": "pdcc",
            "dictionary": cov.dictionary.id,
            "aux_sigma": cov.aux_sigma.tolist(),
        }
    if isinstance(cov, DenseCovariance):
        return {"kind": "dense", "matrix": cov.matrix.tolist()}
    raise ValidationError(f"cannot serialize covariance of type {type(cov).__name__}")


def write_model(forecasts: Sequence[MixtureForecast], path: PathLike) -> None:
    """Write forecasts as one model document; instance order is preserved."""
    forecasts = list(forecasts)
    if not forecasts:
        raise ValidationError("refusing to write a model file with no instances")
    horizon = forecasts[0].horizon
    seen: set[str] = set()
    for fc in forecasts:
        if not isinstance(fc, MixtureForecast):
            raise ValidationError("model files hold MixtureForecast objects")
        if fc.horizon != horizon:
            raise ShapeMismatch("all instances in one model file must share the horizon")
        if not fc.instance_id:
            raise ValidationError("model files require non-empty instance ids")
        if fc.instance_id in seen:
            raise DuplicateId(f"instance id {fc.instance_id!r} appears more than once")
        seen.add(fc.instance_id)
    registry = _collect_dictionaries(forecasts)

    doc: dict = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "horizon": int(horizon)}
    if registry:
        doc["dictionaries"] = [
            {
                "id": dict_id,
                "ridge": float(ridge),
                "matrix": dictionary.u.tolist(),
            }
            for dict_id, (dictionary, ridge) in sorted(registry.items())
        ]
    instances = []
    for fc in forecasts:
        entry: dict = {"id": fc.instance_id}
        condition = _condition_to_json(fc.condition, fc.instance_id)
        if condition is not None:
            entry["condition"] = condition
        entry["k"] = fc.n_components
        entry["weights"] = fc.weights.tolist()
        entry["components"] = [
            {"mean": comp.mean.tolist(), "cov": _covariance_to_json(comp.cov)}
            for comp in fc.components
        ]
        instances.append(entry)
    doc["instances"] = instances
    _dump_json(doc, path)


# ---------------------------------------------------------------------------
# Delimited tables.


def _format_float(value) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise NonFiniteInput("refusing to serialize non-finite value")
    return repr(value)


def _check_cell_id(identifier: str, what: str) -> str:
    if not isinstance(identifier, str) or not identifier:
        raise ValidationError(f"{what} must be a non-empty string")
    if "," in identifier or "\n" in identifier or "\r" in identifier:
        raise ValidationError(f"{what} {identifier!r} contains a delimiter character")
    return identifier


def _write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_table(path: PathLike, expected_header: Optional[Sequence[str]] = None):
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty table", location=str(path))
    header = lines[0].split(",")
    if expected_header is not None and header != list(expected_header):
        raise ParseError(
            f"header is {','.join(header)!r}, expected {','.join(expected_header)!r}",
            location="line 1",
        )
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise RaggedRow(
                f"line {line_no} has {len(cells)} cells, expected {len(header)}"
            )
        rows.append((line_no, cells))
    return header, rows


def _parse_float_cell(cell: str, location: str) -> float:
    try:
        value = float(cell)
    except ValueError as exc:
        raise ParseError(f"not a number: {cell!r}", location=location) from exc
    if not math.isfinite(value):
        raise ParseError(f"non-finite value: {cell!r}", location=location)
    return value


def _parse_int_cell(cell: str, location: str) -> int:
    try:
        return int(cell)
    except ValueError as exc:
        raise ParseError(f"not an integer: {cell!r}", location=location) from exc


def _step_header(prefix: Sequence[str], first: int, last: int) -> list[str]:
    return list(prefix) + [f"t{t}" for t in range(first, last + 1)]


def _read_id_value_table(path: PathLike, column_prefix: str) -> dict[str, np.ndarray]:
    header, rows = _read_table(path)
    if not header or header[0] != "instance_id":
        raise ParseError(
            f"first column is {header[0]!r}, expected 'instance_id'", location="line 1"
        )
    width = len(header) - 1
    if width < 1:
        raise ParseError("table has no value columns", location="line 1")
    expected = [f"{column_prefix}{i}" for i in range(1, width + 1)]
    if header[1:] != expected:
        raise ParseError(
            f"value columns are {header[1:]!r}, expected {expected!r}", location="line 1"
        )
    out: dict[str, np.ndarray] = {}
    for line_no, cells in rows:
        instance_id = cells[0]
        if not instance_id:
            raise ParseError("empty instance id", location=f"line {line_no}")
        if instance_id in out:
            raise DuplicateId(f"instance id {instance_id!r} appears more than once")
        values = np.array(
            [
                _parse_float_cell(cell, f"line {line_no}, column {name}")
                for name, cell in zip(header[1:], cells[1:])
            ]
        )
        out[instance_id] = values
    return out


def _write_id_value_table(
    table: Mapping[str, np.ndarray], path: PathLike, column_prefix: str
) -> None:
    ids = sorted(table)
    width = None
    rows = []
    for instance_id in ids:
        _check_cell_id(instance_id, "instance id")
        values = np.asarray(table[instance_id], dtype=np.float64).reshape(-1)
        if width is None:
            width = values.size
            if width < 1:
                raise ValidationError("rows must have at least one value")
        elif values.size != width:
            raise ShapeMismatch(
                f"row {instance_id!r} has {values.size} values, expected {width}"
            )
        rows.append([instance_id] + [_format_float(v) for v in values])
    if width is None:
        raise ValidationError("refusing to write an empty table")
    header = ["instance_id"] + [f"{column_prefix}{i}" for i in range(1, width + 1)]
    _write_table(path, header, rows)


def read_profiles(path: PathLike) -> dict[str, np.ndarray]:
    """Read realized daily profiles keyed by instance id."""
    return _read_id_value_table(path, "t")


def write_profiles(profiles: Mapping[str, np.ndarray], path: PathLike) -> None:
    """Write daily profiles, rows sorted by instance id."""
    _write_id_value_table(profiles, path, "t")


def read_conditions(path: PathLike) -> dict[str, np.ndarray]:
    """Read the companion condition table keyed by instance id."""
    return _read_id_value_table(path, "c")


def write_conditions(conditions: Mapping[str, np.ndarray], path: PathLike) -> None:
    """Write condition vectors, rows sorted by instance id."""
    _write_id_value_table(conditions, path, "c")


def read_components(path: PathLike) -> dict[str, int]:
    """Read generating-component records keyed by instance id."""
    _, rows = _read_table(path, expected_header=["instance_id", "component"])
    out: dict[str, int] = {}
    for line_no, cells in rows:
        instance_id = cells[0]
        if not instance_id:
            raise ParseError("empty instance id", location=f"line {line_no}")
        if instance_id in out:
            raise DuplicateId(f"instance id {instance_id!r} appears more than once")
        out[instance_id] = _parse_int_cell(cells[1], f"line {line_no}, column component")
    return out


def write_components(components: Mapping[str, int], path: PathLike) -> None:
    """Write generating-component records, rows sorted by instance id."""
    rows = []
    for instance_id in sorted(components):
        _check_cell_id(instance_id, "instance id")
        rows.append([instance_id, str(int(components[instance_id]))])
    _write_table(path, ["instance_id", "component"], rows)


def write_ensemble(ens: Ensemble, path: PathLike) -> None:
    """Write an ensemble's trajectories, one row per trace.

    Columns are labeled with absolute 1-based step numbers, starting after
    the observed prefix.
    """
    _check_cell_id(ens.source_id, "instance id")
    horizon = ens.t_prime + ens.remaining
    header = _step_header(["instance_id", "trace"], ens.t_prime + 1, horizon)
    rows = []
    for i in range(ens.n_traces):
        rows.append(
            [ens.source_id, str(i)] + [_format_float(v) for v in ens.trajectories[i]]
        )
    _write_table(path, header, rows)


_TRACE_HEADER = ["dataset_tag", "variant", "metric", "t_prime", "value"]
_GRID_HEADER = ["variant", "t_prime", "t", "value"]


def write_trace(traces, path: PathLike) -> None:
    """Write one or more performance traces as a trace table.

    Rows are sorted by (dataset_tag, metric, variant, t_prime); the
    (metric, variant, t_prime) key must be unique across the whole file.
    """
    if isinstance(traces, PerformanceTrace):
        traces = [traces]
    rows = []
    seen = set()
    for trace in traces:
        if not isinstance(trace, PerformanceTrace):
            raise ValidationError("trace tables hold PerformanceTrace objects")
        for t_prime, value in trace.values.items():
            key = (trace.metric, trace.variant, t_prime)
            if key in seen:
                raise DuplicateId(
                    f"duplicate trace key (metric={key[0]}, variant={key[1]}, "
                    f"t_prime={key[2]})"
                )
            seen.add(key)
            rows.append(
                (
                    trace.dataset,
                    trace.metric,
                    trace.variant,
                    t_prime,
                    [trace.dataset, trace.variant, trace.metric, str(t_prime), _format_float(value)],
                )
            )
    if not rows:
        raise ValidationError("refusing to write an empty trace table")
    rows.sort(key=lambda r: r[:4])
    _write_table(path, _TRACE_HEADER, [r[4] for r in rows])


def read_trace(path: PathLike) -> list[PerformanceTrace]:
    """Read a trace table back into traces, one per (dataset, metric, variant)."""
    _, rows = _read_table(path, expected_header=_TRACE_HEADER)
    groups: dict[tuple[str, str, str], dict[int, float]] = {}
    seen = set()
    for line_no, cells in rows:
        dataset, variant, metric, t_prime_cell, value_cell = cells
        t_prime = _parse_int_cell(t_prime_cell, f"line {line_no}, column t_prime")
        value = _parse_float_cell(value_cell, f"line {line_no}, column value")
        key = (metric, variant, t_prime)
        if key in seen:
            raise DuplicateId(
                f"duplicate trace key (metric={metric}, variant={variant}, "
                f"t_prime={t_prime})"
            )
        seen.add(key)
        groups.setdefault((dataset, metric, variant), {})[t_prime] = value
    traces = []
    for (dataset, metric, variant), values in sorted(groups.items()):
        try:
            traces.append(
                PerformanceTrace(metric=metric, variant=variant, dataset=dataset, values=values)
            )
        except ValidationError as exc:
            raise ParseError(str(exc), location=str(path)) from exc
    return traces


def write_grid(grids, path: PathLike) -> None:
    """Write one or more waterfall grids as a grid table."""
    if isinstance(grids, WaterfallGrid):
        grids = [grids]
    rows = []
    seen = set()
    for grid in grids:
        if not isinstance(grid, WaterfallGrid):
            raise ValidationError("grid tables hold WaterfallGrid objects")
        for (t_prime, t), value in grid.values.items():
            key = (grid.variant, t_prime, t)
            if key in seen:
                raise DuplicateId(
                    f"duplicate grid key (variant={grid.variant}, t_prime={t_prime}, t={t})"
                )
            seen.add(key)
            rows.append(
                (key, [grid.variant, str(t_prime), str(t), _format_float(value)])
            )
    if not rows:
        raise ValidationError("refusing to write an empty grid table")
    rows.sort(key=lambda r: r[0])
    _write_table(path, _GRID_HEADER, [r[1] for r in rows])


def read_grid(path: PathLike) -> list[WaterfallGrid]:
    """Read a grid table back into waterfall grids, one per variant."""
    _, rows = _read_table(path, expected_header=_GRID_HEADER)
    groups: dict[str, dict[tuple[int, int], float]] = {}
    seen = set()
    for line_no, cells in rows:
        variant, t_prime_cell, t_cell, value_cell = cells
        t_prime = _parse_int_cell(t_prime_cell, f"line {line_no}, column t_prime")
        t = _parse_int_cell(t_cell, f"line {line_no}, column t")
        value = _parse_float_cell(value_cell, f"line {line_no}, column value")
        if t <= t_prime:
            raise ParseError(
                f"grid cell must satisfy t > t_prime, got t={t}, t_prime={t_prime}",
                location=f"line {line_no}",
            )
        key = (variant, t_prime, t)
        if key in seen:
            raise DuplicateId(
                f"duplicate grid key (variant={variant}, t_prime={t_prime}, t={t})"
            )
        seen.add(key)
        groups.setdefault(variant, {})[(t_prime, t)] = value
    grids = []
    for variant, values in sorted(groups.items()):
        try:
            grids.append(WaterfallGrid(variant=variant, values=values))
        except ValidationError as exc:
            raise ParseError(str(exc), location=str(path)) from exc
    return grids


# ---------------------------------------------------------------------------
# Tuning reports and generator configs.


def write_tuning_report(report: TuningReport, path: PathLike) -> None:
    """Write a tuning report, including its per-K NLL traces."""
    doc = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "k_grid": list(report.k_grid),
        "k_star": int(report.k_star),
        "gap": {str(k): float(report.gap[k]) for k in report.k_grid},
        "traces": {
            str(k): {
                name: {str(t): float(v) for t, v in sorted(trace.values.items())}
                for name, trace in sorted(report.traces[k].items())
            }
            for k in report.k_grid
        },
    }
    _dump_json(doc, path)


def _int_keyed(node, path: str) -> dict[int, float]:
    obj = _expect_object(node, path)
    out = {}
    for key, value in obj.items():
        try:
            ikey = int(key)
        except ValueError as exc:
            raise ParseError(f"key {key!r} is not an integer", location=path) from exc
        out[ikey] = _expect_float(value, f"{path}.{key}")
    return out


def read_tuning_report(path: PathLike) -> TuningReport:
    """Read a tuning report written by :func:`write_tuning_report`."""
    root = _expect_object(_load_json(path), "$")
    fmt = _expect_str(_take(root, "format", "$"), "$.format")
    if fmt != REPORT_FORMAT:
        raise ParseError(f"unsupported document format {fmt!r}", location="$.format")
    version = _expect_int(_take(root, "version", "$"), "$.version")
    if version != REPORT_VERSION:
        raise VersionMismatch(
            f"report format version {version} is not supported (expected {REPORT_VERSION})"
        )
    k_grid = [
        _expect_int(x, f"$.k_grid[{i}]")
        for i, x in enumerate(_expect_list(_take(root, "k_grid", "$"), "$.k_grid"))
    ]
    k_star = _expect_int(_take(root, "k_star", "$"), "$.k_star")
    gap = _int_keyed(_take(root, "gap", "$"), "$.gap")
    traces_node = _expect_object(_take(root, "traces", "$"), "$.traces")
    _reject_unknown(root, "$")
    dataset_by_name = {"best_case": "best_case", "synthetic": "synthetic"}
    traces: dict[int, dict[str, PerformanceTrace]] = {}
    for key, node in traces_node.items():
        path_k = f"$.traces.{key}"
        try:
            k = int(key)
        except ValueError as exc:
            raise ParseError(f"key {key!r} is not an integer", location="$.traces") from exc
        entry = _expect_object(node, path_k)
        traces[k] = {}
        for name in list(entry):
            if name not in dataset_by_name:
                raise ParseError("unknown field", location=f"{path_k}.{name}")
            values = _int_keyed(entry.pop(name), f"{path_k}.{name}")
            traces[k][name] = PerformanceTrace(
                metric="nll", variant="updated", dataset=dataset_by_name[name], values=values
            )
    try:
        return TuningReport(k_grid=tuple(k_grid), gap=gap, k_star=k_star, traces=traces)
    except FormatError:
        raise
    except ValidationError as exc:
        raise ParseError(str(exc), location="$") from exc


_GENERATOR_FIELDS = {
    "horizon",
    "n_basis",
    "amplitude",
    "noise_scale",
    "covariance",
    "dictionary_size",
    "ridge",
    "condition_dim",
    "pool_size",
    "seed",
}


def read_generator_config(path: PathLike) -> GeneratorConfig:
    """Read a generator config document (JSON object of config fields)."""
    root = _expect_object(_load_json(path), "$")
    kwargs = {}
    if "horizon" not in root:
        raise ParseError("missing required field", location="$.horizon")
    for key in list(root):
        if key not in _GENERATOR_FIELDS:
            raise ParseError("unknown field", location=f"$.{key}")
        value = root.pop(key)
        if key in ("amplitude", "noise_scale"):
            pair = _float_vector(value, f"$.{key}")
            if pair.size != 2:
                raise ParseError("expected a (low, high) pair", location=f"$.{key}")
            kwargs[key] = (float(pair[0]), float(pair[1]))
        elif key == "covariance":
            kwargs[key] = _expect_str(value, f"$.{key}")
        elif key == "ridge":
            kwargs[key] = _expect_float(value, f"$.{key}")
        elif key in ("dictionary_size", "pool_size"):
            kwargs[key] = None if value is None else _expect_int(value, f"$.{key}")
        else:
            kwargs[key] = _expect_int(value, f"$.{key}")
    return GeneratorConfig(**kwargs)


def write_generator_config(cfg: GeneratorConfig, path: PathLike) -> None:
    """Write a generator config document."""
    doc = {
        "horizon": cfg.horizon,
        "n_basis": cfg.n_basis,
        "amplitude": list(cfg.amplitude),
        "noise_scale": list(cfg.noise_scale),
        "covariance": cfg.covariance,
        "ridge": cfg.ridge,
        "condition_dim": cfg.condition_dim,
        "pool_size": cfg.pool_size,
        "seed": cfg.seed,
    }
    if cfg.covariance == "pdcc":
        doc["dictionary_size"] = cfg.dictionary_size
    _dump_json(doc, path)
