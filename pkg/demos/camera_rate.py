"""What feature prediction changes when images are slow.

With a 5 Hz camera and a 100 Hz loop, the filter without prediction hands
the controller a feature that only moves on image ticks; with prediction it
moves every tick. This script shows that staircase and the resulting
tracking numbers on the windy course.

    python3 demos/camera_rate.py [camera_rate_hz]
"""

import sys

import numpy as np

from pipevs.harness.config import bundled_scenario, load_scenario
from pipevs.harness.episode import run_episode
from pipevs.harness.metrics import COL


def main(rate="5"):
    base = load_scenario(bundled_scenario("wind")).with_overrides(**{"camera.rate": int(rate)})
    for method in ("eskf-vmpc", "eskf-pre-vmpc"):
        result = run_episode(base.with_overrides(method=method), write=False)
        log = result.log[result.log[:, COL["controlling"]] > 0.5]
        r_ctrl = log[:, COL["r_est"]]
        moving = np.mean(np.abs(np.diff(r_ctrl)) > 0)
        lag = np.sqrt(np.mean((r_ctrl - log[:, COL["r_true"]]) ** 2))
        m = result.metrics
        print(f"{method:14s} control feature changes on {moving:5.1%} of ticks, "
              f"rms(r_est - r_true) {lag:.4f}; rmse theta {m.rmse_theta:.5f}, "
              f"rmse r {m.rmse_r:.5f}, {m.termination}")


if __name__ == "__main__":
    main(*sys.argv[1:])
