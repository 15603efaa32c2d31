"""Experiment reports: result rows, summary, and their on-disk form."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_safe(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


@dataclass
class ExperimentReport:
    """Rows of per-run results plus a summary computed from them.

    ``summarize`` is the function that produced ``summary`` from ``rows``
    and the config; ``check_summary`` re-runs it.  Wall-clock timings live
    in ``timing`` and are written to ``timing.json`` only, so
    ``report.csv`` is reproducible byte for byte.
    """

    experiment_id: str
    config_echo: dict
    rows: list[dict]
    summary: dict
    columns: list[str]
    timing: dict = field(default_factory=dict)
    plots: list[str] = field(default_factory=list)
    summarize: Callable[[list[dict], dict], dict] | None = field(default=None, repr=False)

    def check_summary(self) -> bool:
        if self.summarize is None:
            return True
        return _json_safe(self.summarize(self.rows, self.config_echo)) == _json_safe(self.summary)

    def csv_text(self) -> str:
        lines = [",".join(self.columns)]
        for r in self.rows:
            lines.append(",".join(_cell(r.get(c)) for c in self.columns))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.csv_text(), encoding="utf-8")
        payload = {"experiment_id": self.experiment_id, "config": self.config_echo, "summary": self.summary}
        (out / "summary.json").write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
        (out / "timing.json").write_text(json.dumps(_json_safe(self.timing), indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
        return out


def read_report_rows(path) -> list[dict]:
    """Rows of a written ``report.csv`` with numbers and booleans parsed back."""

    def parse(s: str):
        if s == "":
            return None
        if s in ("true", "false"):
            return s == "true"
        try:
            return int(s)
        except ValueError:
            pass
        try:
            return float(s)
        except ValueError:
            return s

    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: parse(v) for k, v in rec.items()} for rec in csv.DictReader(fh)]
