"""
ExperimentPath utility class for all run-directory path logic.
Encapsulates slugification and artifact path generation so every command
writes to the same layout.
"""
import re
from pathlib import Path
from typing import Optional

from scripts.env_utils import output_dir


class ExperimentPath:
    """
    Handles all file and folder path logic for one named run.
    Ensures run directory names are slugified and consistent.
    """
    def __init__(self, run_name: str, root: Optional[str] = None):
        self.run_name = run_name
        self.slug = self._slugify(run_name)
        self.root = Path(root or output_dir())

    def run_dir(self) -> Path:
        """Returns the Path to the run's artifact folder (slugified)."""
        return self.root / self.slug

    def ensure_run_dir(self) -> Path:
        """Creates the run directory if it doesn't exist and returns the Path."""
        dir_path = self.run_dir()
        dir_path.mkdir(parents=True, exist_ok=True)
        return dir_path

    def artifact(self, filename: str) -> Path:
        return self.run_dir() / filename

    def model_file(self) -> Path:
        return self.artifact("model.json")

    def loss_history_file(self) -> Path:
        return self.artifact("loss_history.csv")

    def gram_file(self, label: str = "gram") -> Path:
        return self.artifact(f"{self._slugify(label)}.csv")

    def pr_curve_file(self) -> Path:
        return self.artifact("pr_curve.csv")

    def kpca_file(self) -> Path:
        return self.artifact("kpca_coordinates.csv")

    def pairs_file(self) -> Path:
        return self.artifact("pairs.csv")

    def report_file(self, command: str) -> Path:
        return self.artifact(f"report_{self._slugify(command)}.json")

    def _slugify(self, text: str) -> str:
        """
        Convert a string into a filename-safe slug.
        Replaces whitespace with underscores and removes invalid characters.
        """
        text = re.sub(r'\s+', '_', text.strip())
        return re.sub(r'[<>:"/\\|?*]', '_', text) or "run"
