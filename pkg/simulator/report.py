"""
Report generator for simulation runs.
Writes the run manifest that makes every output directory reproducible.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

from simulator.data_logger import DataLogger


MANIFEST_FILE = "manifest.json"


class ReportGenerator:
    """Builds and saves run manifests"""

    def __init__(self, data_logger: DataLogger):
        """
        Initialize report generator.

        Args:
            data_logger: Logger owning the run directory the manifest goes into
        """
        self.data_logger = data_logger

    def build_manifest(
        self,
        subcommand: str,
        config: Dict[str, Any],
        seed: Optional[int],
        threads: int,
        preset: Optional[str] = None,
        summary: Optional[Dict[str, Any]] = None,
    ) -> Dict[str, Any]:
        """
        Manifest for a finished run.

        Args:
            subcommand: CLI subcommand that produced the run
            config: Fully resolved scenario config (JSON-ready)
            seed: Seed used, None for deterministic subcommands without sampling
            threads: Worker threads used
            preset: Preset the config started from, if any
            summary: Subcommand-specific headline numbers

        Returns:
            Manifest dict; contains no wall-clock data so reruns are identical
        """
        outputs: List[str] = sorted(set(self.data_logger.written))
        return {
            "subcommand": subcommand,
            "preset": preset,
            "seed": seed,
            "threads": threads,
            "config": config,
            "outputs": outputs,
            "summary": summary or {},
        }

    def save_manifest(self, manifest: Dict[str, Any]) -> Path:
        manifest = dict(manifest)
        manifest["outputs"] = sorted(set(manifest["outputs"]) | {MANIFEST_FILE})
        return self.data_logger.write_json(MANIFEST_FILE, manifest)
