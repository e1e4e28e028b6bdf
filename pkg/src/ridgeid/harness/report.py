"""Serialization of experiment reports to JSON and CSV."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

__all__ = [
    "TIMING_KEYS",
    "dumps",
    "strip_timings",
    "phase_transition_csv",
    "report_csv",
    "write_report",
    "load_report",
]

TIMING_KEYS = ("timings_ms",)


def dumps(report: dict) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def strip_timings(report: dict) -> dict:
    return {k: v for k, v in report.items() if k not in TIMING_KEYS}


def _fmt(x) -> str:
    return "" if x is None else repr(x) if isinstance(x, float) else str(x)


def _cell(x) -> str:
    return "" if x is None else f"{x:.4f}"


def phase_transition_csv(report: dict) -> str:
    """Rows are eps values, columns m_X values, cells success fractions."""
    agg = report["aggregate"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps\\m_X", *agg["m_X"]])
    for eps, row in zip(agg["eps"], agg["success_fraction_grid"]):
        w.writerow([_fmt(float(eps)), *(_cell(v) for v in row)])
    return buf.getvalue()


def _rows_identify(report):
    head = ["trial", "eps", "m_X", "s_value", "n_found", "success", "n_distinct", "frobenius_error",
            "queries_total", "reconstruction_sup", "reconstruction_mse", "error"]
    rows = []
    for r in report["per_trial"]:
        rec = r.get("reconstruction") or {}
        rows.append([r["trial"], r["eps"], r["m_X"], r["s_value"], r["n_found"], int(r["success"]),
                     r["n_distinct"], r["frobenius_error"], r["queries"].get("total"),
                     rec.get("sup"), rec.get("mse"), r["error"]])
    return head, rows


def _rows_whitening(report):
    width = max((len(r["s_history"]) for r in report["per_trial"]), default=0)
    head = ["trial", "eps", *(f"s_{k}" for k in range(width)), "error"]
    rows = []
    for r in report["per_trial"]:
        s = r["s_history"] + [None] * (width - len(r["s_history"]))
        rows.append([r["trial"], r["eps"], *s, r["error"]])
    return head, rows


def _rows_gd(report):
    head = ["trial", "pipeline_frobenius_error", "pipeline_mse", "pipeline_known_profile_mse",
            "gd_frobenius_error", "gd_mse", "gd_monotone"]
    rows = []
    for r in report["per_trial"]:
        p, g = r["pipeline"], r["gd"] or {}
        rows.append([r["trial"], p.get("frobenius_error"), (p.get("reconstruction") or {}).get("mse"),
                     p.get("known_profile_mse"), g.get("frobenius_error"), g.get("mse"),
                     "" if not g else int(g["monotone"])])
    return head, rows


def report_csv(report: dict) -> str:
    """Tabular view of a report; the phase-transition grid for sweeps, per-trial rows otherwise."""
    kind = report["config"]["kind"]
    if kind == "phase-transition":
        return phase_transition_csv(report)
    head, rows = {"identify": _rows_identify, "whitening-curve": _rows_whitening, "compare-gd": _rows_gd}[kind](report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_report(report: dict, out_dir, stem: str | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.json`` and ``<stem>.csv`` into ``out_dir``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or report["config"]["kind"]
    jpath, cpath = out / f"{stem}.json", out / f"{stem}.csv"
    jpath.write_text(dumps(report))
    cpath.write_text(report_csv(report))
    return jpath, cpath


def load_report(path) -> dict:
    doc = json.loads(Path(path).read_text())
    missing = {"config", "git_describe", "per_trial", "aggregate", "timings_ms"} - set(doc)
    if missing:
        raise ValueError(f"not a report, missing {sorted(missing)}")
    return doc
