"""Report generation utilities for benchmark, audit and calibration runs."""

import json
import logging
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import pandas as pd

from .serialization import file_digest
from .. import __version__
from ..models import AuditReport, RunManifest

logger = logging.getLogger(__name__)


class ReportGenerator:
    """Writes result tables and the run manifest into one output directory."""

    def __init__(self, output_dir: str = "data/outputs"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_table(self, frame: pd.DataFrame, filename: str) -> str:
        """One CSV table, header row first, no index column."""
        output_path = self.output_dir / filename
        frame.to_csv(output_path, index=False, float_format="%.10g")
        logger.info(f"Generated table: {filename} ({len(frame)} rows)")
        return str(output_path)

    def write_json(self, payload, filename: str) -> str:
        output_path = self.output_dir / filename
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, ensure_ascii=False, default=str)
        logger.info(f"Generated JSON report: {filename}")
        return str(output_path)

    @staticmethod
    def audit_table(reports: Iterable[AuditReport]) -> pd.DataFrame:
        rows = []
        for report in reports:
            row = report.model_dump(mode="json")
            row["notes"] = "; ".join(report.notes)
            rows.append(row)
        return pd.DataFrame(rows)

    def write_manifest(self, subcommand: str, config: Optional[Dict] = None, seeds: Optional[List[int]] = None,
                       inputs: Optional[Iterable[str]] = None, outputs: Optional[Iterable[str]] = None,
                       start_time: Optional[float] = None) -> str:
        """manifest.json with the tool version, config, seeds and sha256 digests of every file."""
        manifest = RunManifest(
            tool_version=__version__,
            subcommand=subcommand,
            config=config or {},
            seeds=list(seeds or []),
            input_digests={str(path): file_digest(path) for path in inputs or []},
            output_digests={Path(path).name: file_digest(path) for path in outputs or []},
            wall_clock=time.time() - start_time if start_time is not None else 0.0,
        )
        return self.write_json(manifest.model_dump(mode="json"), "manifest.json")

    def generate_run_report(self, subcommand: str, tables: Dict[str, pd.DataFrame],
                            config: Optional[Dict] = None, seeds: Optional[List[int]] = None,
                            inputs: Optional[Iterable[str]] = None,
                            start_time: Optional[float] = None) -> Dict[str, str]:
        """Write every table as ``<name>.csv`` followed by the manifest; returns the file paths."""
        reports: Dict[str, str] = {}
        for name, frame in tables.items():
            reports[name] = self.write_table(frame, f"{name}.csv")
        reports["manifest"] = self.write_manifest(subcommand, config, seeds, inputs,
                                                  list(reports.values()), start_time)
        logger.info(f"Generated {len(reports)} report files in {self.output_dir}")
        return reports
