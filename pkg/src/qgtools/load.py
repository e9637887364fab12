"""
This module reads and writes metric graphs, optionally with a planar embedding, in the
JSON graph format used by the command-line tools.

A file holds `vertices: [{id, x?, y?}]`, `edges: [{id, tail, head, length, density}]`
and an optional `embedding: {edges: [{id, radius, points?}]}` block. Densities and radii
are `{type: "const", value}` or `{type: "sampled", grid, values}`. A lead has `head`
null and `length` "inf".
"""

import json
import math
import logging
import os

from typing import Union

import numpy as np

from .graph import LIST_DENSITY_TYPES, DensitySpec, EdgeRecord, MetricGraph
from .manifold import EdgeCurve, EmbeddedGraph

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed graph file; the message names the offending field."""


def _field(record: dict, name: str, where: str):
    if not isinstance(record, dict):
        raise GraphFormatError(
            f"`{where}` must be an object, got {type(record).__name__}"
        )
    if name not in record:
        raise GraphFormatError(f"Missing field `{where}.{name}`")
    return record[name]


def _number(value, where: str, allow_inf: bool = False) -> float:
    if allow_inf and value in ("inf", "Infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GraphFormatError(f"Field `{where}` must be a number, got {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise GraphFormatError(f"Field `{where}` must be an integer, got {value!r}")
    return value


def _density_from_dict(d: dict, where: str) -> DensitySpec:
    kind = _field(d, "type", where)
    if kind not in LIST_DENSITY_TYPES:
        raise GraphFormatError(
            f"Field `{where}.type` is `{kind}`; must be one of {LIST_DENSITY_TYPES}"
        )
    try:
        if kind == "const":
            value = _field(d, "value", where)
            return DensitySpec.constant(_number(value, f"{where}.value"))
        grid = _field(d, "grid", where)
        values = _field(d, "values", where)
        return DensitySpec.sampled(
            [_number(x, f"{where}.grid") for x in grid],
            [_number(p, f"{where}.values") for p in values],
        )
    except GraphFormatError:
        raise
    except (TypeError, ValueError) as err:
        raise GraphFormatError(f"Field `{where}`: {err}") from err


def _density_to_dict(density: DensitySpec) -> dict:
    if density.kind == "const":
        return {"type": "const", "value": density.value}
    return {
        "type": "sampled",
        "grid": list(density.grid),
        "values": list(density.values),
    }


def graph_from_dict(d: dict) -> MetricGraph:
    """Build a MetricGraph from the `vertices` and `edges` fields of a parsed file.

    :param d: Parsed graph file
    :type d: dict

    :returns: The metric graph
    :rtype: MetricGraph
    """

    vertices = _field(d, "vertices", "graph")
    edges = _field(d, "edges", "graph")
    if not isinstance(vertices, list) or not vertices:
        raise GraphFormatError("Field `vertices` must be a non-empty list")
    if not isinstance(edges, list):
        raise GraphFormatError("Field `edges` must be a list")

    vertex_ids = [
        _integer(_field(v, "id", f"vertices[{i}]"), f"vertices[{i}].id")
        for i, v in enumerate(vertices)
    ]

    records = []
    for i, e in enumerate(edges):
        where = f"edges[{i}]"
        head = _field(e, "head", where)
        records.append(
            EdgeRecord(
                id=_integer(_field(e, "id", where), f"{where}.id"),
                tail=_integer(_field(e, "tail", where), f"{where}.tail"),
                head=None if head is None else _integer(head, f"{where}.head"),
                length=_number(_field(e, "length", where), f"{where}.length", True),
                density=_density_from_dict(
                    e.get("density", {"type": "const", "value": 1.0}),
                    f"{where}.density",
                ),
            )
        )

    try:
        return MetricGraph(vertices=tuple(vertex_ids), edges=tuple(records))
    except GraphFormatError:
        raise
    except ValueError as err:
        raise GraphFormatError(f"Field `edges`: {err}") from err


def embedding_from_dict(d: dict) -> EmbeddedGraph:
    """Build an EmbeddedGraph from a parsed file. Every vertex needs `x` and `y`; edges
    without `points` in the `embedding` block are straight, and edges without a
    `radius` use their density as radius.

    :param d: Parsed graph file
    :type d: dict

    :returns: The embedded graph
    :rtype: EmbeddedGraph
    """

    g = graph_from_dict(d)

    positions = {}
    for i, v in enumerate(d["vertices"]):
        where = f"vertices[{i}]"
        positions[v["id"]] = (
            _number(_field(v, "x", where), f"{where}.x"),
            _number(_field(v, "y", where), f"{where}.y"),
        )

    block = d.get("embedding", {"edges": []})
    entries = _field(block, "edges", "embedding")
    if not isinstance(entries, list):
        raise GraphFormatError("Field `embedding.edges` must be a list")

    by_id = {}
    for i, entry in enumerate(entries):
        where = f"embedding.edges[{i}]"
        edge_id = _integer(_field(entry, "id", where), f"{where}.id")
        if not any(e.id == edge_id for e in g.edges):
            raise GraphFormatError(
                f"Field `{where}.id` refers to unknown edge {edge_id}"
            )
        by_id[edge_id] = (entry, where)

    curves, radii = {}, {}
    for e in g.edges:
        if e.is_lead:
            raise GraphFormatError(f"Lead {e.id} cannot be embedded")
        entry, where = by_id.get(e.id, ({}, None))
        if "radius" in entry:
            radii[e.id] = _density_from_dict(entry["radius"], f"{where}.radius")
        if "points" in entry:
            points = np.asarray(entry["points"], dtype=float)
            if points.ndim != 2 or points.shape[1] != 2:
                raise GraphFormatError(
                    f"Field `{where}.points` must be a list of [x, y]"
                )
            try:
                curves[e.id] = EdgeCurve(points)
            except ValueError as err:
                raise GraphFormatError(f"Field `{where}.points`: {err}") from err
        else:
            curves[e.id] = EdgeCurve.straight(positions[e.tail], positions[e.head])

    try:
        return EmbeddedGraph(graph=g, positions=positions, curves=curves, radii=radii)
    except ValueError as err:
        raise GraphFormatError(f"Field `embedding`: {err}") from err


def graph_to_dict(graph: Union[MetricGraph, EmbeddedGraph]) -> dict:
    """Inverse of `graph_from_dict`, and of `embedding_from_dict` for embedded graphs.
    Curved edges are written as point lists."""

    eg = graph if isinstance(graph, EmbeddedGraph) else None
    g = eg.graph if eg is not None else graph

    vertices = []
    for v in g.vertices:
        record = {"id": v}
        if eg is not None:
            record["x"], record["y"] = (float(c) for c in eg.positions[v])
        vertices.append(record)

    d = {
        "vertices": vertices,
        "edges": [
            {
                "id": e.id,
                "tail": e.tail,
                "head": e.head,
                "length": "inf" if math.isinf(e.length) else e.length,
                "density": _density_to_dict(e.density),
            }
            for e in g.edges
        ],
    }
    if eg is not None:
        entries = []
        for e in g.edges:
            entry = {"id": e.id, "radius": _density_to_dict(eg.radius(e.id))}
            if not eg.curve(e.id).is_straight:
                entry["points"] = eg.curve(e.id).points.tolist()
            entries.append(entry)
        d["embedding"] = {"edges": entries}
    return d


def _read_json(fpath: str) -> dict:
    with open(fpath, "r", encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as err:
            raise GraphFormatError(f"{fpath} is not valid JSON: {err}") from err
    if not isinstance(d, dict):
        raise GraphFormatError(f"{fpath} must contain a JSON object")
    return d


def load_graph(fpath: str) -> MetricGraph:
    """Read a metric graph from a JSON graph file, ignoring any embedding.

    :param fpath: Path to the graph file
    :type fpath: str

    :returns: The metric graph
    :rtype: MetricGraph
    """

    g = graph_from_dict(_read_json(fpath))
    logger.info(
        "Loaded %s: %d vertices, %d edges", fpath, len(g.vertices), len(g.edges)
    )
    return g


def load_embedded_graph(fpath: str) -> EmbeddedGraph:
    """Read a graph file with vertex positions (and optionally an `embedding` block).

    :param fpath: Path to the graph file
    :type fpath: str

    :returns: The embedded graph
    :rtype: EmbeddedGraph
    """

    d = _read_json(fpath)
    if "embedding" not in d and not all("x" in v for v in d.get("vertices", [])):
        raise GraphFormatError(
            f"{fpath} has neither an `embedding` block nor vertex positions"
        )
    return embedding_from_dict(d)


def save_graph(graph: Union[MetricGraph, EmbeddedGraph], fpath: str) -> str:
    """Write `graph` as a JSON graph file, creating parent directories if needed.

    :returns: The path written
    :rtype: str
    """

    outdir = os.path.dirname(fpath)
    if outdir and not os.path.exists(outdir):
        os.makedirs(outdir)
    with open(fpath, "w", encoding="utf-8") as f:
        json.dump(graph_to_dict(graph), f, indent=2)
        f.write("\n")
    return fpath
