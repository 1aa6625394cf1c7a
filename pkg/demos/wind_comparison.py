"""Compare the four methods on the default course in a 3 m/s crosswind.

Writes a comparison table and bar charts. Takes a few minutes on one core.

    python3 demos/wind_comparison.py [out_dir]
"""

import sys

from pipevs.harness.config import bundled_scenario, load_scenario
from pipevs.harness.sweep import sweep


def main(out_dir="runs/demo_wind"):
    cfg = load_scenario(bundled_scenario("wind"))
    rows = sweep(cfg, {"method": ["ibvs", "ibvs-mpc", "eskf-vmpc", "eskf-pre-vmpc"]}, out_dir)
    best = min(rows, key=lambda r: r["rmse_r"] if r["rmse_r"] is not None else float("inf"))
    print(f"{'method':15s} {'rmse_theta':>11s} {'rmse_r':>9s} {'vs best r':>9s}  result")
    for r in rows:
        ratio = r["rmse_r"] / best["rmse_r"] if r["rmse_r"] is not None else float("nan")
        print(f"{r['method']:15s} {r['rmse_theta']:11.6f} {r['rmse_r']:9.6f} {ratio:9.2f}  "
              f"{r['termination']} ({r['completion']:.0%})")
    print(f"table and charts in {out_dir}")


if __name__ == "__main__":
    main(*sys.argv[1:])
