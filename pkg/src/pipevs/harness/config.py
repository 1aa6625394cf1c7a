"""Scenario files: YAML in, validated :class:`ScenarioConfig` out.

Every section is optional and falls back to the defaults below. Unknown keys
anywhere raise :class:`ConfigError` so typos fail fast.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from ..baselines import METHODS, IbvsConfig, IbvsMpcConfig, VelocityTracker
from ..controller import AGGRESSIVE, CONSERVATIVE, VmpcConfig
from ..errors import ConfigError
from ..estimator import EskfConfig
from ..vision import CameraExtrinsics, CameraIntrinsics
from ..world import (ActuatorModel, PipelineModel, WindModel, arc,
                     default_pipeline, straight)

WEIGHT_PRESETS = {"aggressive": AGGRESSIVE, "conservative": CONSERVATIVE}

DEFAULTS: dict = {
    "method": "eskf-pre-vmpc",
    "seed": 0,
    "duration": "completion",
    "max_duration": 400.0,
    "state_rate": 100,
    "noise_sigma2": 0.0,
    "output_dir": "runs/episode",
    "pipeline": "default",
    "start": {"arclength": 1.0, "height": 2.05, "lateral_offset": 0.0, "yaw_offset": 0.0,
              "speed": 0.0},
    "camera": {
        "rate": 20,
        "dropout": 0.0,
        "latency_ticks": 0,
        "intrinsics": {"f_u": 400.0, "f_v": 400.0, "c_u": 424.0, "c_v": 240.0,
                       "width": 848, "height": 480},
        "extrinsics": {"R_BC": [[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]],
                       "t_BC": [0.0, 0.0, -0.05]},
    },
    "wind": "off",
    "drag_coeff": 0.3,
    "plant": {"mass": 1.5, "rate_time_constant": 0.02, "thrust_time_constant": 0.04,
              "rate_limit": 3.0, "thrust_limits": [0.0, 36.0]},
    "controller": {"N": 20, "t_p": 0.1, "weights": "aggressive", "v_weight": 0.01,
                   "vz_weight": 1.0, "Psi": [0.05, 0.05, 0.01], "v_hd": 0.5,
                   "rho_d": 300.0, "k1": 600.0, "k2": 2.0, "rate_bound": 2.0,
                   "max_iters": 5, "step_tol": 1e-8, "cost_tol": 1e-10, "k_c": 2.0,
                   "thrust_model": "feedback"},
    "estimator": {"R0": [0.01] * 5, "R1": [0.1, 0.1, 0.01, 0.01, 0.01], "S": [0.001] * 5,
                  "q": [1e-4] * 5, "P0": [0.5] * 5 + [1.0] * 5,
                  "use_commanded_rates": True},
    "baselines": {"ibvs_lambda": 1.0, "pinv_tol": 1e-6, "k_v": 1.5, "k_att": 6.0,
                  "max_tilt_deg": 30.0, "mpc_N": 20, "mpc_t_p": 0.1,
                  "mpc_weights": "conservative", "mpc_v_weight": 0.01,
                  "mpc_vz_weight": 1.0, "mpc_twist_weight": 0.05},
    "crash": {"feature_timeout": 2.0, "min_clearance": 0.2, "max_tilt_deg": 60.0},
}

WIND_KEYS = {"mean", "variance", "correlation_time", "drag_coeff"}
SEGMENT_KEYS = {"kind", "length", "turn_deg", "slope_deg"}
PIPELINE_KEYS = {"start_point", "start_heading_deg", "diameter", "segments"}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown key {where!r}")
        if isinstance(base[key], dict) and not isinstance(value, dict):
            raise ConfigError(f"{where!r} must be a mapping")
        if isinstance(base[key], dict):
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _check_keys(d: dict, allowed: set, where: str):
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)} in {where}")


def _pipeline(spec) -> PipelineModel:
    if spec == "default":
        return default_pipeline()
    if not isinstance(spec, dict):
        raise ConfigError("pipeline must be 'default' or a mapping")
    _check_keys(spec, PIPELINE_KEYS, "pipeline")
    segs = []
    for i, seg in enumerate(spec.get("segments", [])):
        if not isinstance(seg, dict):
            raise ConfigError(f"pipeline.segments[{i}] must be a mapping")
        _check_keys(seg, SEGMENT_KEYS, f"pipeline.segments[{i}]")
        kind = seg.get("kind", "straight")
        try:
            if kind == "straight":
                if seg.get("turn_deg", 0.0):
                    raise ConfigError(f"pipeline.segments[{i}]: straight cannot turn")
                segs.append(straight(float(seg.get("length", 8.0)), float(seg.get("slope_deg", 0.0))))
            elif kind == "arc":
                segs.append(arc(float(seg.get("length", 8.0)), float(seg.get("turn_deg", 45.0)),
                                float(seg.get("slope_deg", 0.0))))
            else:
                raise ConfigError(f"pipeline.segments[{i}]: unknown kind {kind!r}")
        except ValueError as exc:
            raise ConfigError(f"pipeline.segments[{i}]: {exc}") from exc
    try:
        return PipelineModel(np.asarray(spec.get("start_point", [0.0, 0.0, 0.0]), float),
                             np.radians(float(spec.get("start_heading_deg", 0.0))),
                             float(spec.get("diameter", 1.5)), tuple(segs))
    except ValueError as exc:
        raise ConfigError(f"pipeline: {exc}") from exc


def _wind(spec, drag_coeff: float, seed: int) -> WindModel:
    if spec in ("off", None, False):
        return WindModel((0.0, 0.0, 0.0), 0.0, 1.0, drag_coeff, seed)
    if not isinstance(spec, dict):
        raise ConfigError("wind must be 'off' or a mapping")
    _check_keys(spec, WIND_KEYS, "wind")
    try:
        return WindModel(tuple(float(x) for x in spec.get("mean", (0.0, 3.0, 0.0))),
                         float(spec.get("variance", 0.04)),
                         float(spec.get("correlation_time", 1.0)),
                         float(spec.get("drag_coeff", drag_coeff)), seed)
    except ValueError as exc:
        raise ConfigError(f"wind: {exc}") from exc


def _weights(spec) -> tuple:
    if isinstance(spec, str):
        if spec not in WEIGHT_PRESETS:
            raise ConfigError(f"unknown weight preset {spec!r}")
        return WEIGHT_PRESETS[spec]
    if isinstance(spec, (list, tuple)) and len(spec) == 2:
        return float(spec[0]), float(spec[1])
    raise ConfigError("weights must be a preset name or [phi_theta, phi_r]")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one closed-loop episode."""

    method: str
    seed: int
    duration: Optional[float]
    max_duration: float
    state_rate: int
    camera_rate: int
    dropout: float
    latency_ticks: int
    noise_sigma2: float
    output_dir: Path
    pipeline: PipelineModel
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    wind: WindModel
    actuator: ActuatorModel
    mass: float
    vmpc: VmpcConfig
    eskf: EskfConfig
    ibvs: IbvsConfig
    ibvs_mpc: IbvsMpcConfig
    tracker: VelocityTracker
    use_commanded_rates: bool
    start_arclength: float
    start_height: float
    start_lateral_offset: float
    start_yaw_offset: float
    start_speed: float
    feature_timeout: float
    min_clearance: float
    max_tilt: float
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def dt(self) -> float:
        return 1.0 / self.state_rate

    @property
    def camera_stride(self) -> int:
        return self.state_rate // self.camera_rate

    @property
    def time_limit(self) -> float:
        return self.max_duration if self.duration is None else self.duration

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        """Rebuild from the raw tree with top-level or dotted-key overrides."""
        raw = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            node = raw
            parts = key.split(".")
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = value
        return build_config(raw)


def build_config(tree: Optional[dict]) -> ScenarioConfig:
    """Validate a parsed scenario tree against the defaults."""
    tree = {} if tree is None else tree
    if not isinstance(tree, dict):
        raise ConfigError("scenario must be a mapping at the top level")
    c = _merge(DEFAULTS, tree)
    try:
        return _build(c, tree)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(c: dict, tree: dict) -> ScenarioConfig:
    if c["method"] not in METHODS:
        raise ConfigError(f"unknown method {c['method']!r}; expected one of {METHODS}")
    state_rate = int(c["state_rate"])
    cam = c["camera"]
    camera_rate = int(cam["rate"])
    if state_rate <= 0 or camera_rate <= 0:
        raise ConfigError("rates must be positive")
    if camera_rate > state_rate or state_rate % camera_rate:
        raise ConfigError("state_rate must be a multiple of camera.rate")
    if not 0.0 <= float(cam["dropout"]) <= 1.0:
        raise ConfigError("camera.dropout must lie in [0, 1]")
    if int(cam["latency_ticks"]) < 0:
        raise ConfigError("camera.latency_ticks must be >= 0")
    if float(c["noise_sigma2"]) < 0:
        raise ConfigError("noise_sigma2 must be >= 0")
    duration = c["duration"]
    if duration == "completion":
        duration = None
    else:
        duration = float(duration)
        if duration < 0:
            raise ConfigError("duration must be >= 0 or 'completion'")

    seed = int(c["seed"])
    pl = c["plant"]
    mass = float(pl["mass"])
    actuator = ActuatorModel(float(pl["rate_time_constant"]), float(pl["thrust_time_constant"]),
                             float(pl["rate_limit"]), tuple(float(x) for x in pl["thrust_limits"]))

    ct = c["controller"]
    phi_t, phi_r = _weights(ct["weights"])
    Phi = np.diag([phi_t, phi_r, float(ct["v_weight"]), float(ct["vz_weight"])])
    intr = CameraIntrinsics(**{k: cam["intrinsics"][k] for k in cam["intrinsics"]})
    vmpc = VmpcConfig(N=int(ct["N"]), t_p=float(ct["t_p"]), Phi=Phi, Phi_N=Phi.copy(),
                      Psi=np.diag([float(x) for x in ct["Psi"]]), v_hd=float(ct["v_hd"]),
                      rho_d=float(ct["rho_d"]), k1=float(ct["k1"]), k2=float(ct["k2"]),
                      c_v=intr.c_v, rate_bound=float(ct["rate_bound"]),
                      max_iters=int(ct["max_iters"]), step_tol=float(ct["step_tol"]),
                      cost_tol=float(ct["cost_tol"]), k_c=float(ct["k_c"]),
                      thrust_limits=actuator.thrust_limits, mass=mass,
                      thrust_model=str(ct["thrust_model"]))

    es = c["estimator"]
    eskf = EskfConfig(R0=np.diag(es["R0"]), R1=np.diag(es["R1"]), S=np.diag(es["S"]),
                      q=np.asarray(es["q"], float), P0=np.diag(es["P0"]), Ts=1.0 / state_rate)

    bl = c["baselines"]
    mpc_t, mpc_r = _weights(bl["mpc_weights"])
    ibvs = IbvsConfig(float(bl["ibvs_lambda"]), np.zeros(6), float(bl["pinv_tol"]))
    ibvs_mpc = IbvsMpcConfig(int(bl["mpc_N"]), float(bl["mpc_t_p"]), np.diag([mpc_t, mpc_r]),
                             float(bl["mpc_v_weight"]), float(bl["mpc_vz_weight"]),
                             float(bl["mpc_twist_weight"]) * np.eye(6))
    tracker = VelocityTracker(float(bl["k_v"]), float(bl["k_att"]),
                              np.radians(float(bl["max_tilt_deg"])), mass, actuator.thrust_limits)

    ext = CameraExtrinsics(np.asarray(cam["extrinsics"]["R_BC"], float),
                           np.asarray(cam["extrinsics"]["t_BC"], float))
    R = ext.R_BC
    if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-10) \
            or not np.isclose(np.linalg.det(R), 1.0, atol=1e-10):
        raise ConfigError("camera.extrinsics.R_BC must be a rotation matrix")

    st = c["start"]
    cr = c["crash"]
    pipeline = _pipeline(c["pipeline"])
    if not 0.0 <= float(st["arclength"]) < pipeline.total_length:
        raise ConfigError("start.arclength must lie on the pipeline")
    return ScenarioConfig(
        method=c["method"], seed=seed, duration=duration, max_duration=float(c["max_duration"]),
        state_rate=state_rate, camera_rate=camera_rate, dropout=float(cam["dropout"]),
        latency_ticks=int(cam["latency_ticks"]), noise_sigma2=float(c["noise_sigma2"]),
        output_dir=Path(c["output_dir"]), pipeline=pipeline, intrinsics=intr, extrinsics=ext,
        wind=_wind(c["wind"], float(c["drag_coeff"]), seed), actuator=actuator, mass=mass,
        vmpc=vmpc, eskf=eskf, ibvs=ibvs, ibvs_mpc=ibvs_mpc, tracker=tracker,
        use_commanded_rates=bool(es["use_commanded_rates"]),
        start_arclength=float(st["arclength"]), start_height=float(st["height"]),
        start_lateral_offset=float(st["lateral_offset"]),
        start_yaw_offset=np.radians(float(st["yaw_offset"])), start_speed=float(st["speed"]),
        feature_timeout=float(cr["feature_timeout"]), min_clearance=float(cr["min_clearance"]),
        max_tilt=np.radians(float(cr["max_tilt_deg"])), raw=copy.deepcopy(tree))


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a YAML scenario file."""
    path = Path(path)
    try:
        tree: Any = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed scenario {path}: {exc}") from exc
    return build_config(tree)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    path = Path(__file__).resolve().parent.parent / "scenarios" / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return path
