"""Exports a MetricReport as JSON and its repetition table as CSV."""

from pathlib import Path
from typing import Optional, Tuple, Union

import pandas as pd

from evaluation.suite import MetricReport
from misc.utility_functions import _next_available_path, timeit


class ReportExporter:
    def __init__(self, report: MetricReport, repetitions: Optional[pd.DataFrame] = None,
                 base_name: str = "metric_report"):
        self.report = report
        self.repetitions = repetitions
        self.base_name = base_name

    @timeit
    def export(self, output_path: Optional[Union[str, Path]] = None) -> Tuple[Path, Optional[Path]]:
        """
        Write <name>.json and, when repetitions are present, <name>.csv next to it.
        Without `output_path` a non-clobbering name in the reports directory is used.
        """
        if output_path is None:
            json_path = _next_available_path(self.base_name, ".json", "reports")
        else:
            json_path = Path(output_path)
            json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(self.report.to_json())
        print(f"✅ Metric report written → {json_path}")

        csv_path = None
        if self.repetitions is not None:
            csv_path = json_path.with_suffix(".csv")
            self.repetitions.to_csv(csv_path, index=False)
            print(f"✅ Repetition table written → {csv_path}")
        return json_path, csv_path
