#!/usr/bin/env python3
"""Coverage-probability study: bootstrap CIs for the model parameters.

Runs the (n=6, J=10) design with per-replicate bootstraps; desk scale is
200 replicates x B=300, --full raises B to 1000.  This is the slowest of
the shipped studies.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from addtfit.simulation import load_scenario, run_recovery_study, write_study_csvs  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario",
                        default=str(ROOT / "scenarios" / "recovery_cp_n6_j10.json"))
    parser.add_argument("--full", action="store_true")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--out-dir", default=str(ROOT / "results"))
    args = parser.parse_args()

    scen = load_scenario(args.scenario)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    metrics = run_recovery_study(scen, workers=args.threads, full=args.full)
    out = out_dir / "cp_metrics.json"
    out.write_text(json.dumps(metrics.to_json(), indent=2) + "\n")
    write_study_csvs(metrics, out_dir / "cp")
    print(f"cp study: {(time.time() - t0) / 60:.1f} min -> {out}")
    for pname in ("beta", "sigma", "rho"):
        row = metrics.coverage[pname]
        print(f"  CP {pname}: quantile={row['quantile']:.3f} "
              f"bias-corrected={row['bias_corrected']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
