"""Versioned CSV files for simulation records and summaries."""

from __future__ import annotations

import csv
import io

from .simstudy import RECORD_FIELDS, SUMMARY_FIELDS, SimRecord, SummaryRecord

SCHEMA_LINE = "# poststrat-harmonize v1"


class CsvFormatError(ValueError):
    """A CSV file does not match the expected schema; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _dumps(fields, rows) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_results(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_dumps(RECORD_FIELDS, records))


def write_summary(path, summary):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_dumps(SUMMARY_FIELDS, summary))


def _float(text, optional=False):
    if text == "" and optional:
        return None
    return float(text)


def _bool(text):
    if text not in ("true", "false"):
        raise ValueError(f"expected true/false, got {text!r}")
    return text == "true"


_RECORD_PARSERS = {
    "replicate": int, "p_nb_male": float, "estimate": lambda t: _float(t, True),
    "lower": lambda t: _float(t, True), "upper": lambda t: _float(t, True),
    "truth": lambda t: _float(t, True), "available": _bool, "flagged": _bool,
}
_SUMMARY_PARSERS = {
    "p_nb_male": float, "mean_bias": float, "bias_q025": float, "bias_q975": float,
    "mean_width": float, "width_q025": float, "width_q975": float, "n_effective": int,
}


def _read(path, fields, parsers, kind):
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    start = 0
    if lines and lines[0].startswith("#"):
        if lines[0].strip() != SCHEMA_LINE:
            raise CsvFormatError(f"unsupported schema {lines[0].strip()!r}", 1)
        start = 1
    if start >= len(lines):
        raise CsvFormatError("missing header row", start + 1)
    reader = csv.reader(lines[start:])
    header = next(reader)
    if tuple(header) != tuple(fields):
        raise CsvFormatError(f"header does not match the {kind} schema", start + 1)
    for offset, row in enumerate(reader):
        lineno = start + 2 + offset
        if not row:
            continue
        if len(row) != len(fields):
            raise CsvFormatError(f"expected {len(fields)} fields, found {len(row)}", lineno)
        try:
            values = [parsers.get(name, str)(text) for name, text in zip(fields, row)]
        except ValueError as err:
            raise CsvFormatError(str(err), lineno) from None
        out.append(values)
    return out


def read_results(path) -> list:
    return [SimRecord(*v) for v in _read(path, RECORD_FIELDS, _RECORD_PARSERS, "results")]


def read_summary(path) -> list:
    return [SummaryRecord(*v) for v in _read(path, SUMMARY_FIELDS, _SUMMARY_PARSERS, "summary")]
