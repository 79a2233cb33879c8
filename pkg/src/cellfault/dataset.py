"""KPI datasets and their ARFF-subset / CSV serialization."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ParseError, ValidationError
from .schema import (
    CELL_ID,
    CLASS_LABELS,
    CORE_NAMES,
    COUNTER_NAMES,
    DIAGNOSIS,
    EXTENDED_NAMES,
    NUMERIC_NAMES,
    DiagnosisClass,
    KpiRecord,
    canonical_name,
)

NUMERIC = "numeric"
STRING = "string"
NOMINAL = "nominal"

DEFAULT_RELATION = "cell_performance"


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str = NUMERIC
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, STRING, NOMINAL):
            raise ValidationError(f"unknown attribute kind {self.kind!r}")
        if self.kind == NOMINAL and not self.values:
            raise ValidationError(f"nominal attribute {self.name!r} has no values")


def diagnosis_attribute(labels: Iterable[str] = ()) -> Attribute:
    values = list(CLASS_LABELS)
    values += sorted(set(labels) - set(values))
    return Attribute(DIAGNOSIS, NOMINAL, tuple(values))


@dataclass(frozen=True)
class Dataset:
    relation: str
    attributes: tuple[Attribute, ...]
    rows: tuple[tuple, ...] = ()
    provenance: str = "generated"
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        index = {}
        for i, attr in enumerate(self.attributes):
            if attr.name in index:
                raise ValidationError(f"duplicate attribute {attr.name!r}")
            index[attr.name] = i
        object.__setattr__(self, "_index", index)
        checked = []
        for r, row in enumerate(self.rows):
            row = tuple(row)
            if len(row) != len(self.attributes):
                raise ValidationError(
                    f"row {r} has {len(row)} values, expected {len(self.attributes)}")
            checked.append(tuple(_coerce(a, v, r) for a, v in zip(self.attributes, row)))
        object.__setattr__(self, "rows", tuple(checked))

    def __len__(self):
        return len(self.rows)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def index_of(self, name: str) -> int | None:
        """Column index by exact name, else by canonical attribute spelling."""
        if name in self._index:
            return self._index[name]
        target = canonical_name(name)
        if target is None:
            return None
        for i, attr in enumerate(self.attributes):
            if canonical_name(attr.name) == target:
                return i
        return None

    def has(self, name: str) -> bool:
        return self.index_of(name) is not None

    def column(self, name: str) -> list:
        i = self.index_of(name)
        if i is None:
            raise ValidationError(f"dataset has no attribute {name!r}")
        return [row[i] for row in self.rows]

    def matrix(self, names: Sequence[str] = CORE_NAMES) -> np.ndarray:
        missing = [n for n in names if not self.has(n)]
        if missing:
            raise ValidationError(f"dataset lacks attribute(s): {', '.join(missing)}")
        cols = [self.index_of(n) for n in names]
        for n, c in zip(names, cols):
            if self.attributes[c].kind != NUMERIC:
                raise ValidationError(f"attribute {n!r} is not numeric")
        return np.array([[row[c] for c in cols] for row in self.rows], dtype=float).reshape(
            len(self.rows), len(cols))

    @property
    def has_labels(self) -> bool:
        return self.has(DIAGNOSIS)

    def labels(self) -> list[str]:
        if not self.has_labels:
            raise ValidationError("dataset has no diagnosis column")
        out = []
        for r, value in enumerate(self.column(DIAGNOSIS)):
            if value is None or str(value).strip() == "":
                raise ValidationError(f"record {r} is unlabeled")
            out.append(DiagnosisClass.parse(str(value)).value)
        return out

    def cell_ids(self) -> list[str]:
        if self.has(CELL_ID):
            return [str(v) for v in self.column(CELL_ID)]
        return [f"cell-{i:05d}" for i in range(len(self))]

    def records(self) -> list[KpiRecord]:
        names = self.names
        ids = self.cell_ids()
        return [KpiRecord.from_mapping(dict(zip(names, row)), cell_id=cid)
                for row, cid in zip(self.rows, ids)]

    def subset(self, indices: Iterable[int]) -> Dataset:
        return Dataset(self.relation, self.attributes,
                       tuple(self.rows[i] for i in indices), self.provenance)

    def with_labels(self, labels: Sequence[str]) -> Dataset:
        """Copy with the diagnosis column replaced (or appended)."""
        if len(labels) != len(self):
            raise ValidationError(f"{len(labels)} labels for {len(self)} records")
        labels = [str(DiagnosisClass.parse(str(x))) for x in labels]
        attr = diagnosis_attribute(labels)
        i = self.index_of(DIAGNOSIS)
        if i is None:
            attrs = self.attributes + (attr,)
            rows = tuple(row + (lab,) for row, lab in zip(self.rows, labels))
        else:
            attrs = self.attributes[:i] + (attr,) + self.attributes[i + 1:]
            rows = tuple(row[:i] + (lab,) + row[i + 1:] for row, lab in zip(self.rows, labels))
        return Dataset(self.relation, attrs, rows, self.provenance)

    def without_labels(self) -> Dataset:
        i = self.index_of(DIAGNOSIS)
        if i is None:
            return self
        attrs = self.attributes[:i] + self.attributes[i + 1:]
        rows = tuple(row[:i] + row[i + 1:] for row in self.rows)
        return Dataset(self.relation, attrs, rows, self.provenance)

    @classmethod
    def from_records(cls, records: Sequence[KpiRecord], relation: str = DEFAULT_RELATION,
                     provenance: str = "generated") -> Dataset:
        """Columns: cell_id, the eight core attributes, any extended attributes
        and counters present on every record, then diagnosis if any record
        carries one."""
        extended = [n for n in EXTENDED_NAMES
                    if records and all(r.get(n) is not None for r in records)]
        counters = bool(records) and all(r.counters is not None for r in records)
        labeled = any(r.diagnosis is not None for r in records)
        numeric = list(CORE_NAMES) + extended + (list(COUNTER_NAMES) if counters else [])
        attrs = [Attribute(CELL_ID, STRING)] + [Attribute(n) for n in numeric]
        rows = []
        for r in records:
            row = [r.cell_id] + [r.get(n) for n in numeric]
            if labeled:
                if r.diagnosis is None:
                    raise ValidationError(f"record {r.cell_id!r} is unlabeled")
                row.append(r.diagnosis.value)
            rows.append(tuple(row))
        if labeled:
            attrs.append(diagnosis_attribute(r.diagnosis.value for r in records))
        return cls(relation, tuple(attrs), tuple(rows), provenance)


def _coerce(attr: Attribute, value, row: int):
    if attr.kind == NUMERIC:
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"row {row}: {attr.name} value {value!r} is not numeric") from None
        if not math.isfinite(value):
            raise ValidationError(f"row {row}: {attr.name} value {value} is not finite")
        return value
    value = str(value)
    if attr.kind == NOMINAL and value not in attr.values:
        raise ValidationError(f"row {row}: {value!r} not in the value set of {attr.name}")
    return value


# ---------------------------------------------------------------- text input


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)) and not (isinstance(source, str) and "\n" in source):
        path = Path(source)
        if isinstance(source, os.PathLike) or path.exists():
            return path.read_text(encoding="utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


# ---------------------------------------------------------------------- ARFF


def _tokenize(text: str, line: int, sep: str = ",") -> list[tuple[str, bool]]:
    """Split on ``sep`` outside quotes. Returns (token, was_quoted) pairs."""
    tokens = []
    buf = []
    quoted = False
    quote = None
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == "\\" and i + 1 < len(text):
                buf.append(text[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
            else:
                buf.append(ch)
        elif ch in "'\"" and not "".join(buf).strip():
            quote = ch
            quoted = True
            buf = []
        elif ch == sep:
            tokens.append(("".join(buf) if quoted else "".join(buf).strip(), quoted))
            buf = []
            quoted = False
        elif quoted and not ch.isspace():
            raise ParseError(f"unexpected character {ch!r} after quoted value", line)
        elif not quoted:
            buf.append(ch)
        i += 1
    if quote:
        raise ParseError("unterminated quote", line)
    tokens.append(("".join(buf) if quoted else "".join(buf).strip(), quoted))
    return tokens


def _split_name(rest: str, line: int) -> tuple[str, str]:
    rest = rest.strip()
    if rest[:1] in ("'", '"'):
        q = rest[0]
        end = rest.find(q, 1)
        if end < 0:
            raise ParseError("unterminated quoted name", line)
        return rest[1:end], rest[end + 1:].strip()
    parts = rest.split(None, 1)
    if not parts:
        raise ParseError("missing name", line)
    return parts[0], parts[1].strip() if len(parts) > 1 else ""


def read_arff(source) -> Dataset:
    """Parse the ARFF subset: relation, numeric/string/nominal attributes and
    a dense comma-separated data section. Missing values are rejected."""
    text = _read_text(source)
    provenance = str(source) if isinstance(source, (os.PathLike,)) else "stream"
    relation = None
    attributes: list[Attribute] = []
    rows = []
    missing_rows = []
    in_data = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if not in_data:
            head = line.split(None, 1)
            keyword = head[0].lower()
            rest = head[1] if len(head) > 1 else ""
            if keyword == "@relation":
                relation, _ = _split_name(rest, lineno)
            elif keyword == "@attribute":
                name, kind = _split_name(rest, lineno)
                attributes.append(_parse_kind(name, kind, lineno))
            elif keyword == "@data":
                if not attributes:
                    raise ParseError("data section before any attribute", lineno)
                in_data = True
            else:
                raise ParseError(f"unexpected declaration {head[0]!r}", lineno)
            continue
        if line.startswith("{"):
            raise ParseError("sparse rows are not supported", lineno)
        tokens = _tokenize(line, lineno)
        if len(tokens) != len(attributes):
            raise ParseError(
                f"row has {len(tokens)} values, expected {len(attributes)}", lineno)
        values = []
        for col, ((tok, quoted), attr) in enumerate(zip(tokens, attributes), start=1):
            if tok == "?" and not quoted:
                missing_rows.append(lineno)
                values.append(None)
                continue
            values.append(_parse_value(attr, tok, lineno, col))
        rows.append(tuple(values))
    if relation is None:
        raise ParseError("missing @relation header")
    if not in_data:
        raise ParseError("missing @data section")
    if missing_rows:
        lines = sorted(set(missing_rows))
        raise ValidationError(
            f"{len(lines)} record(s) contain missing values ('?'), first at line {lines[0]}")
    try:
        return Dataset(relation, tuple(attributes), tuple(rows), provenance)
    except ValidationError as exc:
        raise ParseError(str(exc)) from exc


def _parse_kind(name: str, kind: str, line: int) -> Attribute:
    if kind.startswith("{"):
        if not kind.endswith("}"):
            raise ParseError("unterminated nominal value set", line)
        values = tuple(tok for tok, _ in _tokenize(kind[1:-1], line))
        if any(v == "" for v in values):
            raise ParseError("empty nominal value", line)
        return Attribute(name, NOMINAL, values)
    k = kind.lower()
    if k in ("numeric", "real", "integer"):
        return Attribute(name, NUMERIC)
    if k == "string":
        return Attribute(name, STRING)
    raise ParseError(f"unsupported attribute kind {kind!r}", line)


def _parse_value(attr: Attribute, tok: str, line: int, col: int):
    if attr.kind == NUMERIC:
        try:
            value = float(tok)
        except ValueError:
            raise ParseError(f"{tok!r} is not numeric", line, col) from None
        if not math.isfinite(value):
            raise ParseError(f"{tok!r} is not finite", line, col)
        return value
    if attr.kind == NOMINAL and tok not in attr.values:
        raise ParseError(f"{tok!r} not in declared values of {attr.name}", line, col)
    return tok


def _quote(text: str, force: bool = False) -> str:
    special = set(",'\"%{}\\\t") | {" "} if force else set(",'\"%{}\\\t")
    if text == "" or text == "?" or any(c in special for c in text) or text != text.strip():
        return "'" + text.replace("\\", "\\\\").replace("'", "\\'") + "'"
    return text


def _render_number(value: float) -> str:
    return repr(float(value))


def write_arff(d: Dataset) -> str:
    lines = [f"@relation {_quote(d.relation, force=True)}", ""]
    for attr in d.attributes:
        if attr.kind == NOMINAL:
            kind = "{" + ",".join(_quote(v) for v in attr.values) + "}"
        else:
            kind = attr.kind
        lines.append(f"@attribute {_quote(attr.name, force=True)} {kind}")
    lines += ["", "@data"]
    for row in d.rows:
        lines.append(",".join(
            _render_number(v) if a.kind == NUMERIC else _quote(v)
            for a, v in zip(d.attributes, row)))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------- CSV


def read_csv(source, has_header: bool = True) -> Dataset:
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    table = [row for row in reader if row and any(cell.strip() for cell in row)]
    if has_header:
        if not table:
            raise ParseError("empty CSV file")
        header, body, first_line = table[0], table[1:], 2
        names = []
        for col, raw in enumerate(header, start=1):
            name = canonical_name(raw)
            if name is None:
                raise ParseError(f"unknown column {raw.strip()!r}", 1, col)
            names.append(name)
    else:
        header, body, first_line = None, table, 1
        width = len(body[0]) if body else len(CORE_NAMES)
        labeled = bool(body) and not _is_number(body[0][-1])
        n_numeric = width - labeled
        if n_numeric > len(NUMERIC_NAMES):
            raise ParseError(f"{width} columns cannot be mapped to the KPI schema")
        names = list(NUMERIC_NAMES[:n_numeric]) + ([DIAGNOSIS] if labeled else [])
    if len(set(names)) != len(names):
        raise ParseError("duplicate columns in header", 1)
    kinds = [STRING if n == CELL_ID else (None if n == DIAGNOSIS else NUMERIC) for n in names]
    rows = []
    for r, row in enumerate(body, start=first_line):
        if len(row) != len(names):
            raise ParseError(f"row has {len(row)} values, expected {len(names)}", r)
        values = []
        for c, (cell, kind) in enumerate(zip(row, kinds), start=1):
            cell = cell.strip()
            if kind == NUMERIC:
                if cell == "?":
                    raise ValidationError(f"row {r}: missing value in column {c}")
                if not _is_number(cell):
                    raise ParseError(f"{cell!r} is not numeric", r, c)
                value = float(cell)
                if not math.isfinite(value):
                    raise ParseError(f"{cell!r} is not finite", r, c)
                values.append(value)
            elif kind is None:
                try:
                    values.append(DiagnosisClass.parse(cell).value)
                except ValidationError:
                    raise ParseError(f"unknown diagnosis {cell!r}", r, c) from None
            else:
                values.append(cell)
        rows.append(tuple(values))
    attrs = []
    for n, kind in zip(names, kinds):
        if kind is None:
            i = names.index(DIAGNOSIS)
            attrs.append(diagnosis_attribute(row[i] for row in rows))
        else:
            attrs.append(Attribute(n, kind))
    provenance = str(source) if isinstance(source, os.PathLike) else "stream"
    return Dataset(DEFAULT_RELATION, tuple(attrs), tuple(rows), provenance)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_csv(d: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(d.names)
    for row in d.rows:
        writer.writerow([_render_number(v) if a.kind == NUMERIC else v
                         for a, v in zip(d.attributes, row)])
    return buf.getvalue()


# --------------------------------------------------------------------- files


def _format_for(path, fmt: str | None) -> str:
    fmt = (fmt or Path(path).suffix.lstrip(".")).lower()
    if fmt not in ("arff", "csv"):
        raise ValidationError(f"cannot infer file format of {str(path)!r}; use .arff or .csv")
    return fmt


def load(path, fmt: str | None = None) -> Dataset:
    path = Path(path)
    if _format_for(path, fmt) == "arff":
        d = read_arff(path)
    else:
        d = read_csv(path, has_header=True)
    return Dataset(d.relation, d.attributes, d.rows, str(path))


def dumps(d: Dataset, fmt: str) -> str:
    return write_arff(d) if fmt == "arff" else write_csv(d)


def save(d: Dataset, path, fmt: str | None = None) -> None:
    Path(path).write_text(dumps(d, _format_for(path, fmt)), encoding="utf-8")


# --------------------------------------------------------------------- split


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    if n == 0:
        raise ValidationError("cannot split an empty dataset")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(math.floor(spec.train_fraction * n + 0.5))
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split; both parts keep the original record order."""
    train_idx, test_idx = split_indices(len(d), spec)
    return d.subset(train_idx), d.subset(test_idx)
