"""Multi-label dataset ingestion.

Supported inputs:

* ARFF (dense and sparse rows) with a Mulan label XML naming the label
  attributes. Label attributes must take values in {0, 1}; nominal
  non-label attributes are one-hot encoded.
* A plain CSV fallback: a header row where columns ending in ``:label``
  are labels, every other column a numeric feature.
"""
from __future__ import annotations

import csv
import io
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParseError, SchemaError

LABEL_SUFFIX = ":label"

_NUMERIC_TYPES = {"numeric", "real", "integer"}


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """Feature matrix ``features`` (m x d) and binary ``labels`` (m x l)."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: Tuple[str, ...] = ()
    label_names: Tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        Y = np.array(self.labels, dtype=np.int8, copy=True)
        if X.ndim != 2 or Y.ndim != 2:
            raise SchemaError("features and labels must be 2-d")
        if X.shape[0] != Y.shape[0]:
            raise SchemaError(
                f"row count mismatch: {X.shape[0]} feature rows, {Y.shape[0]} label rows")
        if X.shape[0] < 1:
            raise SchemaError("dataset has no instances")
        if X.shape[1] < 1:
            raise SchemaError("dataset has no feature columns")
        if Y.shape[1] < 1:
            raise SchemaError("dataset has no label columns")
        if not np.all(np.isfinite(X)):
            raise SchemaError("features contain non-finite values")
        if not np.all((np.asarray(self.labels) == 0) | (np.asarray(self.labels) == 1)):
            raise SchemaError("labels must be binary")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", Y)
        fnames = tuple(self.feature_names) or tuple(f"f{i}" for i in range(X.shape[1]))
        lnames = tuple(self.label_names) or tuple(f"y{j}" for j in range(Y.shape[1]))
        if len(fnames) != X.shape[1] or len(lnames) != Y.shape[1]:
            raise SchemaError("column name count does not match matrix width")
        object.__setattr__(self, "feature_names", fnames)
        object.__setattr__(self, "label_names", lnames)

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    def subset(self, rows, name: Optional[str] = None) -> "DatasetBundle":
        rows = np.asarray(rows, dtype=np.int64)
        return DatasetBundle(self.features[rows], self.labels[rows],
                             self.feature_names, self.label_names,
                             self.name if name is None else name)


# ---------------------------------------------------------------------------
# ARFF

@dataclass
class _Attribute:
    name: str
    kind: str  # "numeric" | "nominal"
    values: List[str] = field(default_factory=list)


def _unquote(token: str) -> str:
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        return token[1:-1]
    return token


def _split_values(text: str) -> List[str]:
    """Split a comma separated list, honouring single and double quotes."""
    if "'" not in text and '"' not in text:
        return [t.strip() for t in text.split(",")]
    quote = "'" if "'" in text else '"'
    reader = csv.reader([text], quotechar=quote, skipinitialspace=True)
    return [t.strip() for t in next(reader)]


def _parse_attribute(rest: str, lineno: int) -> _Attribute:
    rest = rest.strip()
    if not rest:
        raise ParseError("@attribute without a name", lineno)
    if rest[0] in "'\"":
        end = rest.find(rest[0], 1)
        if end < 0:
            raise ParseError("unterminated attribute name", lineno)
        name, kind = rest[1:end], rest[end + 1:].strip()
    else:
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise ParseError("@attribute without a type", lineno)
        name, kind = parts
        kind = kind.strip()
    if kind.startswith("{"):
        if not kind.endswith("}"):
            raise ParseError("unterminated nominal value list", lineno)
        values = [_unquote(v) for v in _split_values(kind[1:-1])]
        if not values or any(v == "" for v in values):
            raise ParseError("empty nominal value", lineno)
        return _Attribute(name, "nominal", values)
    if kind.lower() in _NUMERIC_TYPES:
        return _Attribute(name, "numeric")
    raise ParseError(f"unsupported attribute type {kind!r}", lineno)


def _sparse_row(body: str, n_attrs: int, lineno: int) -> List[Optional[str]]:
    # None marks an omitted entry: numeric 0 or the first nominal value
    row: List[Optional[str]] = [None] * n_attrs
    body = body.strip()
    if not body:
        return row
    for item in _split_values(body):
        parts = item.split(None, 1)
        if len(parts) != 2:
            raise ParseError(f"malformed sparse entry {item!r}", lineno)
        try:
            index = int(parts[0])
        except ValueError:
            raise ParseError(f"malformed sparse index {parts[0]!r}", lineno) from None
        if not 0 <= index < n_attrs:
            raise ParseError(f"unknown attribute index {index}", lineno)
        row[index] = _unquote(parts[1])
    return row


def parse_arff(text, label_names: Sequence[str], name: Optional[str] = None) -> DatasetBundle:
    """Parse ARFF text (a string or a text stream) into a :class:`DatasetBundle`.

    ``label_names`` selects the label attributes; the label matrix columns
    follow the order of ``label_names``.
    """
    if not isinstance(text, str):
        text = text.read()
    attributes: List[_Attribute] = []
    relation = None
    rows: List[Tuple[int, List[Optional[str]]]] = []
    in_data = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if not in_data:
            if not line.startswith("@"):
                raise ParseError("expected a header declaration", lineno)
            keyword, _, rest = line.partition(" ")
            if "\t" in keyword:
                keyword, _, tail = keyword.partition("\t")
                rest = tail + " " + rest
            keyword = keyword.lower()
            if keyword == "@relation":
                relation = _unquote(rest)
            elif keyword == "@attribute":
                attributes.append(_parse_attribute(rest, lineno))
            elif keyword == "@data":
                if relation is None:
                    raise ParseError("missing @relation before @data", lineno)
                if not attributes:
                    raise ParseError("no attributes declared", lineno)
                in_data = True
            else:
                raise ParseError(f"unknown header keyword {keyword!r}", lineno)
            continue

        if line.startswith("{"):
            if not line.endswith("}"):
                raise ParseError("unterminated sparse row", lineno)
            rows.append((lineno, _sparse_row(line[1:-1], len(attributes), lineno)))
        else:
            values = _split_values(line)
            if len(values) != len(attributes):
                raise ParseError(
                    f"expected {len(attributes)} values, found {len(values)}", lineno)
            rows.append((lineno, [_unquote(v) for v in values]))

    if not in_data:
        raise ParseError("missing @data section")
    if not rows:
        raise SchemaError("@data section is empty")

    index_of = {a.name: i for i, a in enumerate(attributes)}
    if len(index_of) != len(attributes):
        raise SchemaError("duplicate attribute names")
    label_names = list(label_names)
    if len(set(label_names)) != len(label_names):
        raise SchemaError("duplicate label names")
    missing = [n for n in label_names if n not in index_of]
    if missing:
        raise SchemaError(f"label attributes not declared: {missing}")
    label_idx = [index_of[n] for n in label_names]
    label_set = set(label_idx)

    # Feature columns in declaration order; nominal features expand one-hot.
    feature_names: List[str] = []
    feature_plan: List[Tuple[int, Optional[dict]]] = []
    for i, attr in enumerate(attributes):
        if i in label_set:
            continue
        if attr.kind == "numeric":
            feature_names.append(attr.name)
            feature_plan.append((i, None))
        else:
            lookup = {v: k for k, v in enumerate(attr.values)}
            feature_names.extend(f"{attr.name}={v}" for v in attr.values)
            feature_plan.append((i, lookup))

    m = len(rows)
    X = np.zeros((m, len(feature_names)), dtype=np.float64)
    Y = np.zeros((m, len(label_idx)), dtype=np.int8)
    for r, (lineno, values) in enumerate(rows):
        col = 0
        for i, lookup in feature_plan:
            v = values[i]
            if v == "?":
                raise ParseError(f"missing value for attribute {attributes[i].name!r}", lineno)
            if lookup is None:
                if v is not None:
                    try:
                        x = float(v)
                    except ValueError:
                        raise ParseError(f"non-numeric value {v!r}", lineno) from None
                    if not math.isfinite(x):
                        raise ParseError(f"non-finite value {v!r}", lineno)
                    X[r, col] = x
                col += 1
            else:
                k = 0 if v is None else lookup.get(v)
                if k is None:
                    raise ParseError(
                        f"value {v!r} not declared for attribute {attributes[i].name!r}", lineno)
                X[r, col + k] = 1.0
                col += len(lookup)
        for c, i in enumerate(label_idx):
            v = values[i]
            if v is None:
                v = attributes[i].values[0] if attributes[i].kind == "nominal" else "0"
            if v == "?":
                raise ParseError(f"missing value for label {attributes[i].name!r}", lineno)
            if v in ("0", "1"):
                Y[r, c] = int(v)
                continue
            try:
                x = float(v)
            except ValueError:
                x = None
            if x not in (0.0, 1.0):
                raise SchemaError(
                    f"line {lineno}: label {attributes[i].name!r} has non-binary value {v!r}")
            Y[r, c] = int(x)

    if not feature_names:
        raise SchemaError("dataset has no feature attributes")
    return DatasetBundle(X, Y, tuple(feature_names), tuple(label_names),
                         name if name is not None else (relation or ""))


def _format_number(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


def to_arff(data: DatasetBundle) -> str:
    """Serialize ``data`` as dense ARFF with labels declared as ``{0,1}`` last."""
    out = io.StringIO()
    out.write(f"@relation '{data.name}'\n\n")
    for n in data.feature_names:
        out.write(f"@attribute '{n}' numeric\n")
    for n in data.label_names:
        out.write(f"@attribute '{n}' {{0,1}}\n")
    out.write("\n@data\n")
    for x, y in zip(data.features, data.labels):
        out.write(",".join([_format_number(v) for v in x] + [str(int(v)) for v in y]))
        out.write("\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Mulan label XML

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_mulan_labels(xml) -> List[str]:
    """Label names from a Mulan ``<labels>`` document, in document order."""
    if not isinstance(xml, str):
        xml = xml.read()
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise ParseError(f"malformed label XML: {exc}", exc.position[0]) from None
    if _local(root.tag) != "labels":
        raise SchemaError(f"expected <labels> root, found <{_local(root.tag)}>")
    names: List[str] = []
    for el in root.iter():
        if el is root or _local(el.tag) != "label":
            continue
        name = el.get("name")
        if name is None:
            continue
        if name in names:
            raise SchemaError(f"duplicate label name {name!r}")
        names.append(name)
    if not names:
        raise SchemaError("label XML declares no labels")
    return names


# ---------------------------------------------------------------------------
# CSV fallback

def parse_csv(text, name: str = "") -> DatasetBundle:
    if not isinstance(text, str):
        text = text.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty CSV input", 1) from None
    header = [h.strip() for h in header]
    label_cols = [i for i, h in enumerate(header) if h.endswith(LABEL_SUFFIX)]
    feature_cols = [i for i, h in enumerate(header) if not h.endswith(LABEL_SUFFIX)]
    if not label_cols:
        raise SchemaError(f"no label columns (suffix {LABEL_SUFFIX!r})")
    X_rows, Y_rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} values, found {len(row)}", lineno)
        try:
            X_rows.append([float(row[i]) for i in feature_cols])
        except ValueError:
            raise ParseError("non-numeric feature value", lineno) from None
        y = []
        for i in label_cols:
            v = row[i].strip()
            if v not in ("0", "1"):
                raise SchemaError(f"line {lineno}: non-binary label value {v!r}")
            y.append(int(v))
        Y_rows.append(y)
    if not X_rows:
        raise SchemaError("CSV has no data rows")
    X = np.array(X_rows, dtype=np.float64).reshape(len(X_rows), len(feature_cols))
    if not np.all(np.isfinite(X)):
        raise SchemaError("features contain non-finite values")
    return DatasetBundle(X, np.array(Y_rows, dtype=np.int8),
                         tuple(header[i] for i in feature_cols),
                         tuple(header[i][: -len(LABEL_SUFFIX)] for i in label_cols),
                         name)


def to_csv(data: DatasetBundle) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(data.feature_names) + [n + LABEL_SUFFIX for n in data.label_names])
    for x, y in zip(data.features, data.labels):
        writer.writerow([repr(float(v)) for v in x] + [str(int(v)) for v in y])
    return out.getvalue()


def read_feature_csv(text) -> Tuple[np.ndarray, List[str]]:
    """Read an unlabeled feature table (header row, numeric columns)."""
    if not isinstance(text, str):
        text = text.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise SchemaError("feature file has no data rows")
    header = [h.strip() for h in rows[0]]
    keep = [i for i, h in enumerate(header) if not h.endswith(LABEL_SUFFIX)]
    try:
        X = np.array([[float(r[i]) for i in keep] for r in rows[1:]], dtype=np.float64)
    except (ValueError, IndexError):
        raise ParseError("malformed feature row") from None
    return X, [header[i] for i in keep]


# ---------------------------------------------------------------------------

def load_dataset(path, labels_path=None) -> DatasetBundle:
    """Load ``path`` by extension: ``.csv`` or ``.arff`` (+ Mulan XML).

    For ARFF without an explicit ``labels_path`` a sibling ``<stem>.xml`` is used.
    """
    path = os.fspath(path)
    stem = os.path.splitext(os.path.basename(path))[0]
    if path.lower().endswith(".csv"):
        with open(path, encoding="utf-8") as fh:
            return parse_csv(fh, name=stem)
    if labels_path is None:
        labels_path = os.path.splitext(path)[0] + ".xml"
        if not os.path.exists(labels_path):
            raise SchemaError(f"no label XML given and {labels_path} does not exist")
    with open(labels_path, encoding="utf-8") as fh:
        names = parse_mulan_labels(fh)
    with open(path, encoding="utf-8", errors="replace") as fh:
        return parse_arff(fh, names, name=stem)


def split_train_test(data: DatasetBundle, fraction: float, seed: int):
    """Seeded random partition; the train side gets ``round_half_up(fraction * m)`` rows."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    m = data.n_instances
    n_train = int(math.floor(fraction * m + 0.5))
    if n_train < 1 or n_train > m - 1:
        raise ValueError(f"fraction {fraction} leaves one side of a {m}-row split empty")
    perm = np.random.default_rng(seed).permutation(m)
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:])
    return data.subset(train), data.subset(test)
