"""Byte-stable JSON and CSV emission for experiment reports.

JSON payloads are dicts of plain types serialized with sorted keys and a
trailing newline, so identical runs produce identical bytes.  CSV uses a
comma separator, '.' decimal point, LF line endings, and the literal NA for
undefined ratios.
"""

from __future__ import annotations

import json
from pathlib import Path

SCHEMA = 1


def build_payload(subcommand: str, spec: dict, results: dict, conformance: list, seed: int) -> dict:
    from . import __version__

    return {
        "version": __version__,
        "schema": SCHEMA,
        "subcommand": subcommand,
        "seed": seed,
        "spec": spec,
        "results": results,
        "conformance": conformance,
    }


def all_pass(conformance: list) -> bool:
    return all(cell.get("pass", False) for cell in conformance)


def to_json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv(rows: list[list]) -> str:
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in rows)


def to_csv_text(subcommand: str, results: dict) -> str:
    """Tabular view of the results block, one layout per subcommand."""
    if subcommand == "table":
        rows = [["state", "Q", "P"]]
        for state, q, p in zip(results["states"], results["Q"], results["P"]):
            rows.append([state, q, p])
        return _csv(rows)
    if subcommand == "device":
        keys = ["kind", "rule", "mode", "Q", "P", "Q_ci", "P_ci", "trials"]
        return _csv([keys, [results.get(k) for k in keys]])
    if subcommand == "repeat":
        keys = ["kind", "rule", "mode", "Q1", "P1", "Q2", "P2", "Q2_ci", "P2_ci", "trials"]
        return _csv([keys, [results.get(k) for k in keys]])
    if subcommand == "qsfacts":
        rows = [["fact", "verdict", "expected"]]
        for v in results["verdicts"]:
            rows.append([v["fact"], v["verdict"], results["expected"][v["fact"]]])
        return _csv(rows)
    if subcommand == "singlet":
        rows = [["angle_deg", "E", "E_exact", "E_ci"]]
        for r in results["sweep"]:
            rows.append([r["angle_deg"], r["E"], r["E_exact"], r["E_ci"]])
        return _csv(rows)
    if subcommand == "chsh":
        rows = [["correlator", "E", "E_exact"]]
        for label, c in results["correlators"].items():
            rows.append([label, c["E"], c["E_exact"]])
        rows.append(["S", results["S"], results["S_exact"]])
        return _csv(rows)
    if subcommand == "bohm":
        rows = [["j1", "trials", "winner1_frequency", "mono_violations", "conservation_drift_max"]]
        for r in results["results"]:
            rows.append([r["j1"], r["trials"], r["winner1_frequency"],
                         r["mono_violations"], r["conservation_drift_max"]])
        return _csv(rows)
    if subcommand == "broadcast":
        rows = [["matrix", "row", "col", "re", "im"]]
        for name in ("input", "joint", "reduced_object", "reduced_meter"):
            for i, r in enumerate(results[name]):
                for j, (re, im) in enumerate(r):
                    rows.append([name, i, j, re, im])
        return _csv(rows)
    if subcommand == "inconsistency":
        rows = [["field", "value"]]
        for k, v in results.items():
            rows.append([k, v])
        return _csv(rows)
    raise ValueError(f"no CSV layout for subcommand {subcommand!r}")


def emit_report(payload: dict, fmt: str, path: Path | None) -> str:
    """Render the payload and optionally write it; returns the text emitted."""
    if fmt == "json":
        text = to_json_text(payload)
    elif fmt == "csv":
        text = to_csv_text(payload["subcommand"], payload["results"])
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_bytes(text.encode())
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    return text


def matrix_to_lists(matrix) -> list:
    """Complex matrix as nested [re, im] pairs for JSON/CSV."""
    return [[[float(v.real), float(v.imag)] for v in row] for row in matrix]
