"""CSV ingestion and emission.

Sample files have a header row ``s,x`` followed by one ``label,label``
pair per line (UTF-8).  Alphabets are inferred in order of first
appearance unless an alphabet file (one label per line) is supplied.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError
from .prob import Alphabet, Mechanism, SampleSet

HEADER = ("s", "x")


def read_alphabet(path) -> Alphabet:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(str(exc), path=str(path)) from None
    labels = [ln.strip() for ln in lines if ln.strip()]
    if not labels:
        raise ParseError("alphabet file is empty", path=str(path))
    if len(set(labels)) != len(labels):
        raise ParseError("alphabet file repeats a label", path=str(path))
    return Alphabet(tuple(labels))


def parse_samples(
    text: str,
    s_alphabet: Alphabet | None = None,
    x_alphabet: Alphabet | None = None,
    *,
    source: str | None = None,
) -> SampleSet:
    """Parse sample-CSV text; errors carry the 1-based line number."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file, expected header 's,x'", path=source, line=1) from None
    if tuple(h.strip() for h in header) != HEADER:
        raise ParseError(f"expected header 's,x', got {','.join(header)!r}", path=source, line=1)
    s_labels = list(s_alphabet.labels) if s_alphabet else []
    x_labels = list(x_alphabet.labels) if x_alphabet else []
    s_pos = {lbl: i for i, lbl in enumerate(s_labels)}
    x_pos = {lbl: i for i, lbl in enumerate(x_labels)}
    s_idx, x_idx = [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", path=source, line=line)
        s, x = row[0].strip(), row[1].strip()
        if not s or not x:
            raise ParseError("empty label", path=source, line=line)
        for lbl, pos, labels, fixed, name in (
            (s, s_pos, s_labels, s_alphabet, "s"),
            (x, x_pos, x_labels, x_alphabet, "x"),
        ):
            if lbl not in pos:
                if fixed is not None:
                    raise ParseError(f"{name}-label {lbl!r} not in the supplied alphabet", path=source, line=line)
                pos[lbl] = len(labels)
                labels.append(lbl)
        s_idx.append(s_pos[s])
        x_idx.append(x_pos[x])
    if not s_labels or not x_labels:
        raise ParseError("no sample rows", path=source, line=reader.line_num)
    return SampleSet(Alphabet(tuple(s_labels)), Alphabet(tuple(x_labels)), s_idx, x_idx)


def read_samples(path, s_alphabet: Alphabet | None = None, x_alphabet: Alphabet | None = None) -> SampleSet:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(str(exc), path=str(path)) from None
    return parse_samples(text, s_alphabet, x_alphabet, source=str(path))


def format_samples(samples: SampleSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    s_l, x_l = samples.s_alphabet.labels, samples.x_alphabet.labels
    for s, x in zip(samples.s_idx.tolist(), samples.x_idx.tolist()):
        w.writerow((s_l[s], x_l[x]))
    return buf.getvalue()


def write_samples(path, samples: SampleSet) -> None:
    Path(path).write_text(format_samples(samples), encoding="utf-8")


def fmt_value(v) -> str:
    """Deterministic text form: shortest round-trip repr for floats."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def format_table(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt_value(row.get(c)) for c in columns])
    return buf.getvalue()


def read_table(path_or_text, *, is_text: bool = False) -> list[dict]:
    text = path_or_text if is_text else Path(path_or_text).read_text(encoding="utf-8")
    return list(csv.DictReader(io.StringIO(text)))


def format_matrix(w: Mechanism) -> str:
    columns = ["x"] + [f"y{j}" for j in range(w.n_outputs)]
    rows = [
        {"x": lbl, **{f"y{j}": float(v) for j, v in enumerate(row)}}
        for lbl, row in zip(w.x_alphabet.labels, w.rows)
    ]
    return format_table(columns, rows)


def read_matrix(path) -> tuple[list[str], np.ndarray]:
    """Read a matrix CSV whose first column holds row labels."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(exc), path=str(path)) from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty matrix file", path=str(path), line=1) from None
    labels, rows = [], []
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path=str(path), line=reader.line_num)
        try:
            rows.append([float(v) for v in row[1:]])
        except ValueError:
            raise ParseError("non-numeric matrix entry", path=str(path), line=reader.line_num) from None
        labels.append(row[0].strip())
    if not rows:
        raise ParseError("matrix file has no rows", path=str(path))
    return labels, np.array(rows)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
