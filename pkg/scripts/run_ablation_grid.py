"""Sweep the ablation knobs (latent dimension, design strategy and ratio, init) over one base config."""

import argparse
import sys
from pathlib import Path

import pandas as pd

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from dlf_distill.core.logging import setup_logging
from dlf_distill.models.config import load_config
from dlf_distill.services.pipeline_service import (
    ablation_configs,
    get_pipeline_service,
    report_table,
)


def run_ablation_grid(config_path: Path, output_dir: Path) -> None:
    """Run the pipeline once per knob value and collect the aggregate tables."""
    setup_logging()
    base = load_config(config_path)
    service = get_pipeline_service()

    tables = []
    for label, config in ablation_configs(base):
        run_dir = output_dir / label.replace("=", "-").replace(".", "_")
        print(f"Running {label} -> {run_dir}")
        result = service.run(config, run_dir)
        table = report_table(result.aggregate)
        table.insert(0, "variant", label)
        tables.append(table)

    combined = pd.concat(tables, ignore_index=True)
    output_dir.mkdir(parents=True, exist_ok=True)
    combined.to_csv(output_dir / "ablation.csv", index=False, float_format="%.17g")
    print(f"✅ {len(tables)} variants written to {output_dir / 'ablation.csv'}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, required=True)
    parser.add_argument("--output-dir", type=Path, default=Path("runs/ablation"))
    args = parser.parse_args()
    run_ablation_grid(args.config, args.output_dir)
