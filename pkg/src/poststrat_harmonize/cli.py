"""Command-line entry point: ``simulate``, ``rake`` and ``report``.

Exit codes: 0 success, 1 I/O error, 2 invalid input, 3 partial grid
(some summary cell has no usable replicate), 4 raking did not converge.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

from .config import ConfigError, RunConfig
from .csvio import CsvFormatError, read_summary, write_results, write_summary
from .report import METRICS, write_report
from .simstudy import run_grid, summarize, summary_gaps
from .weighting import MarginSpec, NonConvergence, rake

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_PARTIAL, EXIT_NONCONVERGENCE = range(5)

log = logging.getLogger("poststrat_harmonize")


def git_blob_hash(data: bytes) -> str:
    """SHA-1 of ``data`` as git stores a blob."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_simulate(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
    except OSError as err:
        _err(f"cannot read config {args.config}: {err.strerror or err}")
        return EXIT_IO
    except ConfigError as err:
        _err(str(err))
        return EXIT_INVALID
    out_dir = args.out or cfg.output_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write-test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as err:
        _err(f"output directory {out_dir} is not writable: {err.strerror or err}")
        return EXIT_IO

    workers = cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    records = run_grid(cfg.grid, workers=workers)
    summary = summarize(records)
    gaps = summary_gaps(records)
    paths = {name: os.path.join(out_dir, name) for name in ("results.csv", "summary.csv")}
    try:
        write_results(paths["results.csv"], records)
        write_summary(paths["summary.csv"], summary)
        hashes = {}
        for name, path in paths.items():
            with open(path, "rb") as fh:
                hashes[name] = git_blob_hash(fh.read())
        manifest = {
            "schema": "poststrat-harmonize v1",
            "config": cfg.to_dict(),
            "seed": cfg.grid.base_seed,
            "outputs": hashes,
            "content_hash": hashlib.sha1(
                "".join(f"{k}:{v}\n" for k, v in sorted(hashes.items())).encode()).hexdigest(),
            "n_records": len(records),
            "n_flagged": sum(r.flagged for r in records),
            "gaps": ["/".join(str(x) for x in g) for g in gaps],
        }
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as err:
        _err(f"cannot write outputs to {out_dir}: {err.strerror or err}")
        return EXIT_IO
    print(f"{len(records)} records, {manifest['n_flagged']} flagged, "
          f"{len(summary)} summary rows written to {out_dir}")
    if gaps:
        print(f"partial grid: {len(gaps)} cell/target combinations have no usable replicate",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError("missing header row", 1)
    return rows[0], rows[1:]


def _level(text):
    try:
        return int(text)
    except ValueError:
        return text


def cmd_rake(args) -> int:
    try:
        s_head, s_rows = _read_csv(args.sample)
        m_head, m_rows = _read_csv(args.margins)
    except OSError as err:
        _err(f"cannot read {err.filename}: {err.strerror}")
        return EXIT_IO
    except CsvFormatError as err:
        _err(str(err))
        return EXIT_INVALID
    try:
        if [h.strip() for h in m_head] != ["variable", "level", "target"]:
            raise CsvFormatError("margins header must be variable,level,target", 1)
        entries = []
        for i, row in enumerate(m_rows, start=2):
            if len(row) != 3:
                raise CsvFormatError(f"expected 3 fields, found {len(row)}", i)
            try:
                entries.append((row[0].strip(), _level(row[1].strip()), float(row[2])))
            except ValueError as err:
                raise CsvFormatError(str(err), i) from None
        margins = MarginSpec(tuple(entries))
        columns = {name.strip(): [] for name in s_head}
        names = list(columns)
        for i, row in enumerate(s_rows, start=2):
            if len(row) != len(names):
                raise CsvFormatError(f"sample row has {len(row)} fields, header has "
                                     f"{len(names)}", i)
            for name, text in zip(names, row):
                columns[name].append(_level(text.strip()))
        if not s_rows:
            raise CsvFormatError("sample has no rows", 2)
        ids = columns.get("unit_id", range(1, len(s_rows) + 1))
        wv = rake(columns, margins, tol=args.tol, max_iter=args.max_iter)
    except NonConvergence as err:
        _err(str(err))
        return EXIT_NONCONVERGENCE
    except (CsvFormatError, ValueError) as err:
        _err(str(err))
        return EXIT_INVALID
    try:
        wv.to_csv(args.out, ids)
    except OSError as err:
        _err(f"cannot write {args.out}: {err.strerror}")
        return EXIT_IO
    print(f"rake converged: {wv.iterations} cycles, max relative discrepancy "
          f"{wv.discrepancy:.3g}; weights written to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        summary = read_summary(args.summary)
    except OSError as err:
        _err(f"cannot read {args.summary}: {err.strerror}")
        return EXIT_IO
    except CsvFormatError as err:
        _err(f"{args.summary}: {err}")
        return EXIT_INVALID
    if not summary:
        _err(f"{args.summary} has no summary rows")
        return EXIT_INVALID
    metrics = args.metrics.split(",")
    bad = [m for m in metrics if m not in METRICS]
    if bad:
        _err(f"unknown metric(s): {', '.join(bad)}")
        return EXIT_INVALID
    try:
        paths = write_report(summary, args.out, metrics)
    except OSError as err:
        _err(f"cannot write report to {args.out}: {err.strerror}")
        return EXIT_IO
    print(f"{len(paths)} figures written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poststrat-harmonize",
        description="Simulate sex/gender harmonization strategies for poststratified estimates.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides output_dir in the config)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rake", help="rake a sample CSV to one-way margins")
    p.add_argument("--sample", required=True, help="CSV with one column per margin variable")
    p.add_argument("--margins", required=True, help="CSV with columns variable,level,target")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--out", default="weights.csv")
    p.set_defaults(func=cmd_rake)

    p = sub.add_parser("report", help="draw SVG figures from a summary CSV")
    p.add_argument("--summary", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", default="bias,width", help="comma-separated: bias,width")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
