"""Run the shipped experiment configs end to end and print the headline numbers.

    python scripts/run_benchmarks.py --out results
"""

import argparse
import json
import sys
from pathlib import Path

from parabolic_cl import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--skip-ablation", action="store_true")
    args = ap.parse_args(argv)
    out = Path(args.out).resolve()

    codes = {}
    for name in ("default", "corrupt"):
        codes[name] = cli.main(["run", str(CONFIGS / f"{name}.ini"),
                                "--set", f"experiment.output_dir={out / name}"])
        cli.main(["aggregate", str(out / name)])
    codes["check-bounds"] = cli.main(["check-bounds", str(out / "default")])
    print(json.dumps(json.loads((out / "default" / "bounds_summary.json").read_text()), indent=1))
    if not args.skip_ablation:
        codes["ablate"] = cli.main(["ablate", str(CONFIGS / "ablate.ini"),
                                    "--set", f"experiment.output_dir={out / 'ablate'}"])
        cli.main(["aggregate", str(out / "ablate")])
    codes["verify-pde"] = cli.main(["verify-pde", "--config", str(CONFIGS / "verify.ini"),
                                    "--out", str(out / "verify_pde.csv")])
    print("exit codes:", codes)
    return max(codes.values())


if __name__ == "__main__":
    sys.exit(main())
