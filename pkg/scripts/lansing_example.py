"""Two-type fit of the Lansing Woods maples and hickories.

Usage::

    Rscript scripts/export_lansing.R          # produces lansing.csv
    python scripts/lansing_example.py lansing.csv --iters 10000 --out lansing-out

Runs the chains in parallel, then writes traces, pair correlation tables and
posterior mean intensity grids, the same as ``coxthin fit`` followed by
``coxthin pcf`` and ``coxthin intensity-grid``.
"""
import argparse
import json
import subprocess
import sys
from pathlib import Path


def run(*args: str) -> None:
    print("+ coxthin", " ".join(args), flush=True)
    subprocess.run([sys.executable, "-m", "coxthin.cli", *args], check=True)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("data", help="CSV with x,y,type columns")
    ap.add_argument("--iters", type=int, default=10_000)
    ap.add_argument("--burn", type=int, default=2_000)
    ap.add_argument("--chains", type=int, default=2)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="lansing-out")
    args = ap.parse_args()

    config = {
        "seed": args.seed,
        "model": {"kind": "mtsgcp"},
        "data": {"path": str(Path(args.data).resolve()), "rescale": True},
        "controls": {"grid_res": 64},
        "pcf": {"r_values": [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5], "n_mc": 10**5, "max_draws": 500},
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))
    common = ["--config", str(cfg_path), "--chains", str(args.chains), "--iters", str(args.iters),
              "--burn", str(args.burn)]
    run("fit", "mtsgcp", *common, "--out", str(out / "fit"))
    traces = sorted(str(p) for p in (out / "fit").glob("chain*.jsonl"))
    run("pcf", "--config", str(cfg_path), "--trace", *traces, "--out", str(out / "pcf"))
    print(f"results in {out}")


if __name__ == "__main__":
    main()
