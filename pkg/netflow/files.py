from __future__ import annotations

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from .errors import NetflowError
from .function_space import GridFunction
from .graph import DirectedGraph, GraphValidationError, validate_graph
from .harness import KINDS, RESOLVENT, ConvergenceReport, ReportRow, parse_param
from .matrices import VelocityProfile


log = logging.getLogger(__name__)

REPORT_COLUMNS = ["kind", "n", "param", "probe", "error"]


class FileFormatError(NetflowError):
    module = "files"

    def __init__(self, path, message, line=None, column=None):
        self.path = str(path)
        self.line = line
        self.column = column
        where = self.path
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


def format_number(value) -> str:
    if isinstance(value, complex) or np.iscomplexobj(value):
        value = complex(value)
        if value.imag == 0:
            return f"{value.real:.17g}"
        return f"{value.real:.17g}{value.imag:+.17g}j"
    return f"{float(value):.17g}"


class GraphDocument(BaseModel):
    """ vertices, 1-based edge pairs in edge order, optional positive velocities. """

    model_config = ConfigDict(extra="forbid")

    vertices: int = Field(ge=0)
    edges: List[Tuple[PositiveInt, PositiveInt]] = Field(default_factory=list)
    velocities: Optional[List[PositiveFloat]] = None

    @model_validator(mode="after")
    def velocities_match_edges(self):
        if self.velocities is not None and len(self.velocities) != len(self.edges):
            raise ValueError(
                f"{len(self.velocities)} velocities given for {len(self.edges)} edges"
            )
        return self

    def graph(self) -> DirectedGraph:
        return DirectedGraph(self.vertices, tuple((t - 1, h - 1) for t, h in self.edges))

    def velocity_profile(self) -> VelocityProfile:
        if self.velocities is None:
            return VelocityProfile.unit(len(self.edges))
        return VelocityProfile(self.velocities)


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise FileFormatError(path, f"cannot read: {e}") from e


def load_graph(path):
    """ (DirectedGraph, VelocityProfile) from a graph document. """
    text = _read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FileFormatError(path, e.msg, e.lineno, e.colno) from e
    try:
        doc = GraphDocument.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'document'}: {err['msg']}"
            for err in e.errors()
        )
        raise FileFormatError(path, problems) from e
    g = doc.graph()
    result = validate_graph(g)
    if not result:
        raise GraphValidationError(result.violations)
    log.debug("loaded %s: %s", path, g)
    return g, doc.velocity_profile()


def save_graph(path, g: DirectedGraph, velocities: VelocityProfile = None):
    doc = GraphDocument(
        vertices=g.vertex_count,
        edges=[(t + 1, h + 1) for t, h in g.edges],
        velocities=None if velocities is None else [float(c) for c in velocities.c],
    )
    Path(path).write_text(json.dumps(doc.model_dump(exclude_none=True)) + "\n", encoding="utf-8")


def _parse_value(path, token: str, line: int, column: int):
    try:
        value = complex(token) if "j" in token else float(token)
    except ValueError:
        raise FileFormatError(path, f"not a number: {token!r}", line, column) from None
    if not np.isfinite(value):
        raise FileFormatError(path, f"non-finite value {token!r}", line, column)
    return value


def _tokens(text: str):
    """ (token, column) pairs, 1-based columns """
    column = 0
    for token in text.split():
        column = text.index(token, column)
        yield token, column + 1
        column += len(token)


def parse_function(text: str, path="<string>") -> GridFunction:
    """ header `m N`, then m lines of N values; leading `#` lines are comments. """
    lines = [
        (number, line) for number, line in enumerate(text.splitlines(), start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise FileFormatError(path, "missing header `m N`", 1)
    number, header = lines[0]
    parts = header.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise FileFormatError(path, f"header must be `m N`, got {header.strip()!r}", number, 1)
    m, cells = (int(p) for p in parts)
    if m < 1 or cells < 1:
        raise FileFormatError(path, "m and N must be positive", number, 1)
    rows = lines[1:]
    if len(rows) != m:
        line = rows[-1][0] if rows else number
        raise FileFormatError(path, f"expected {m} value lines, found {len(rows)}", line)

    values = []
    for number, line in rows:
        tokens = list(_tokens(line))
        if len(tokens) != cells:
            column = tokens[min(len(tokens), cells) - 1][1] if tokens else 1
            raise FileFormatError(path, f"expected {cells} values, found {len(tokens)}", number, column)
        values.append([_parse_value(path, token, number, column) for token, column in tokens])
    return GridFunction(np.array(values))


def read_function(path) -> GridFunction:
    return parse_function(_read_text(path), path)


def format_function(f: GridFunction, comments: Iterable[str] = ()) -> str:
    out = io.StringIO()
    for comment in comments:
        out.write(f"# {comment}\n")
    out.write(f"{f.edge_count} {f.cells}\n")
    for row in f.values:
        out.write(" ".join(format_number(v) for v in row) + "\n")
    return out.getvalue()


def write_function(path, f: GridFunction, comments: Iterable[str] = ()):
    Path(path).write_text(format_function(f, comments), encoding="utf-8")


def format_report(report: ConvergenceReport, comments: Iterable[str] = ()) -> str:
    out = io.StringIO()
    for comment in comments:
        out.write(f"# {comment}\n")
    for key, value in report.metadata.items():
        out.write(f"# {key}: {value}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report.rows:
        writer.writerow([row.kind, row.n, row.param, row.probe, format_number(row.error)])
    return out.getvalue()


def write_report(path, report: ConvergenceReport, comments: Iterable[str] = ()):
    Path(path).write_text(format_report(report, comments), encoding="utf-8")


def _report_lines(path):
    text = _read_text(path)
    comments, body = [], []
    for number, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif line.strip():
            body.append((number, line))
    return comments, body


def validate_report(path) -> list:
    """ Problems found in a report file, empty when it is well formed. """
    comments, body = _report_lines(path)
    if not body:
        return [f"{path}: no CSV header"]
    problems = []
    number, header = body[0]
    if next(csv.reader([header])) != REPORT_COLUMNS:
        problems.append(f"{path}:{number}: header must be {','.join(REPORT_COLUMNS)}")
    for number, line in body[1:]:
        fields = next(csv.reader([line]))
        if len(fields) != len(REPORT_COLUMNS):
            problems.append(f"{path}:{number}: expected 5 fields, found {len(fields)}")
            continue
        kind, n, param, probe, error = fields
        if kind not in KINDS:
            problems.append(f"{path}:{number}: unknown kind {kind!r}")
        if not n.isdigit() or int(n) < 1:
            problems.append(f"{path}:{number}: n must be a positive integer, got {n!r}")
        try:
            value = parse_param(kind, param)
            if kind == RESOLVENT and value.real <= 0:
                problems.append(f"{path}:{number}: lambda {param} needs a positive real part")
            elif kind != RESOLVENT and value < 0:
                problems.append(f"{path}:{number}: negative time {param}")
        except ValueError:
            problems.append(f"{path}:{number}: unparseable parameter {param!r}")
        if not probe:
            problems.append(f"{path}:{number}: empty probe id")
        try:
            value = float(error)
            if not math.isfinite(value) or value < 0:
                problems.append(f"{path}:{number}: error {error} is not finite and nonnegative")
        except ValueError:
            problems.append(f"{path}:{number}: unparseable error {error!r}")
    return problems


def read_report(path) -> ConvergenceReport:
    problems = validate_report(path)
    if problems:
        raise FileFormatError(path, "; ".join(problems))
    comments, body = _report_lines(path)
    metadata = {}
    for comment in comments:
        key, sep, value = comment.partition(":")
        if sep:
            metadata[key.strip()] = value.strip()
    rows = [
        ReportRow(kind, int(n), param, probe, float(error))
        for kind, n, param, probe, error in csv.reader(line for _, line in body[1:])
    ]
    return ConvergenceReport(rows, metadata)


def write_gnuplot(stem, report: ConvergenceReport) -> list:
    """ One `n sup_error` file per (kind, probe): <stem>.<kind>.<probe>.dat """
    written = []
    for kind in KINDS:
        sup = report.sup_over_params(kind)
        for probe in report.probes():
            points = sorted((n, error) for (n, p), error in sup.items() if p == probe)
            if not points:
                continue
            path = Path(f"{stem}.{kind}.{probe}.dat")
            lines = [f"# {kind} {probe}: n sup_error"]
            lines.extend(f"{n} {format_number(error)}" for n, error in points)
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            written.append(path)
    return written
