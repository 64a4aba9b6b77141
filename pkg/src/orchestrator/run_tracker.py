"""
Run Tracker - records what an experiment run produced and where it went.
"""
import json
import secrets
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

TRACKING_FILE = 'run.json'


class RunTracker:
    """Track the artifacts written during one experiment run."""

    def __init__(self, experiment: str, output_dir: Union[str, Path]):
        """
        Args:
            experiment: Experiment name
            output_dir: Directory receiving the run's artifacts
        """
        self.experiment = experiment
        self.output_dir = Path(output_dir)
        self.start_time = datetime.now()
        self.run_id = self._generate_run_id()
        self.artifacts: Dict[str, str] = {}
        self.status = 'running'
        self.error: Optional[str] = None

    def _generate_run_id(self) -> str:
        """<experiment>-<start, to the second>-<6 hex digits>"""
        return f"{self.experiment}-{self.start_time:%Y%m%dT%H%M%S}-{secrets.token_hex(3)}"

    def add_artifact(self, kind: str, path: Union[str, Path]):
        """Record an artifact written by the run."""
        self.artifacts[kind] = str(path)

    def fail(self, error: Exception):
        self.status = 'failed'
        self.error = f"{type(error).__name__}: {error}"

    def save_tracking_data(self, config: Dict[str, Any], results: Optional[Dict[str, Any]] = None) -> Path:
        """Write run.json into the output directory."""
        end_time = datetime.now()
        if self.status == 'running':
            self.status = 'completed'

        tracking_data = {
            "run_id": self.run_id,
            "experiment": self.experiment,
            "status": self.status,
            "error": self.error,
            "start_time": self.start_time.isoformat(),
            "end_time": end_time.isoformat(),
            "duration_seconds": (end_time - self.start_time).total_seconds(),
            "artifacts": self.artifacts,
            "results": results or {},
            "config": config,
        }

        self.output_dir.mkdir(parents=True, exist_ok=True)
        tracking_file = self.output_dir / TRACKING_FILE
        with open(tracking_file, 'w') as f:
            json.dump(tracking_data, f, indent=2, default=str)
        return tracking_file


def load_run(output_dir: Union[str, Path]) -> Dict[str, Any]:
    """
    Load the tracking record of a run directory.

    Raises:
        FileNotFoundError: No run.json in the directory
    """
    tracking_file = Path(output_dir) / TRACKING_FILE
    if not tracking_file.exists():
        raise FileNotFoundError(f"Run tracking not found: {tracking_file}")
    with open(tracking_file) as f:
        return json.load(f)


def list_runs(results_dir: Union[str, Path]) -> List[Dict[str, Any]]:
    """Summaries of every tracked run below a results directory."""
    results_dir = Path(results_dir)
    if not results_dir.exists():
        return []

    runs = []
    for file in sorted(results_dir.glob(f"*/{TRACKING_FILE}")):
        with open(file) as f:
            data = json.load(f)
        runs.append({
            "run_id": data["run_id"],
            "experiment": data["experiment"],
            "status": data.get("status", "unknown"),
            "start_time": data["start_time"],
            "duration_seconds": data.get("duration_seconds", 0),
            "directory": str(file.parent),
        })
    return runs
