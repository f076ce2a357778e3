from __future__ import annotations

import csv
import io
import json
from collections.abc import Mapping, Sequence
from typing import Any

from itlb import __version__
from itlb.intransitivity import MC_CSV_COLUMNS, McReport
from itlb.tables import DRAW_CONVENTION


def header(config: Mapping[str, Any], command: str) -> dict[str, Any]:
    """Everything needed to rerun a report: tool version, command, configuration and draw convention."""
    return {
        "tool": "itlb",
        "version": __version__,
        "command": command,
        "seed": config.get("seed"),
        "config": dict(config),
        "draw_convention": DRAW_CONVENTION,
    }


def to_json(config: Mapping[str, Any], command: str, body: Any) -> str:
    return json.dumps({"header": header(config, command), "result": body}, indent=2, sort_keys=False) + "\n"


def mc_to_csv(config: Mapping[str, Any], command: str, reports: Sequence[McReport]) -> str:
    out = io.StringIO()
    for key, value in header(config, command).items():
        if key != "config":
            out.write(f"# {key}: {value}\n")
    out.write(f"# config: {json.dumps(dict(config), sort_keys=True)}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(MC_CSV_COLUMNS)
    for report in reports:
        writer.writerow(report.csv_row())
    return out.getvalue()


def mc_to_json(config: Mapping[str, Any], command: str, reports: Sequence[McReport]) -> str:
    body = []
    for report in reports:
        row = report.to_dict()
        if report.first_certificate is not None:
            row["first_certificate"] = report.first_certificate.to_text()
        body.append(row)
    return to_json(config, command, body)
