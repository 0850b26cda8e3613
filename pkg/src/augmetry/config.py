"""Run configuration: JSON schema, validation, and object builders.

One JSON document configures every pipeline: anthropometry, module
geometry, placements, sweep resolution, task definitions, and the control
block.  Keys carry their units (`*_m`, `*_deg`, `*_g`); angles convert to
radians at the model boundary.  Unknown keys are rejected so typos fail
loudly, with the offending JSON path in the message.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import reconfig, srl
from .body import Anthropometry, VisualField, as_seed_sequence
from .control.controller import ControllerParams
from .errors import ConfigError
from .geom import PointCloud


def default_config() -> dict:
    """The document all pipelines run with unless overridden."""
    return {
        "seed": 20260809,
        "anthropometry": {
            "upper_arm_m": 0.30,
            "forearm_hand_m": 0.33,
            "shoulder_left_m": [0.0, 0.20, 0.55],
            "shoulder_right_m": [0.0, -0.20, 0.55],
        },
        "visual_field": {"normal": [1.0, 0.0, 0.0], "offset_m": 0.0},
        "module": {
            "min_height_m": 0.04,
            "max_height_m": 0.14,
            "plate_radius_m": 0.04,
            "theta_min_deg": 5.0,
            "theta_max_deg": 85.0,
            "max_tilt_deg": 25.0,
            "strong_mass_g": 250.0,
            "lightweight_mass_g": 150.0,
        },
        "placements": [
            {"id": "p1", "position_m": [0.10, 0.0, 0.45],
             "z_axis": [1.0, 0.0, 0.0]},
            {"id": "p2", "position_m": [-0.12, 0.0, 0.45],
             "z_axis": [-1.0, 0.0, 0.0]},
            {"id": "p3", "position_m": [0.10, 0.10, 0.03],
             "z_axis": [math.cos(math.radians(20.0)), 0.0,
                        -math.sin(math.radians(20.0))]},
            {"id": "p4", "position_m": [0.0, 0.18, -0.25],
             "z_axis": [0.0, 1.0, 0.0]},
        ],
        "sweep": {"n_min": 1, "n_max": 8, "samples": 10000,
                  "reference_samples": 100000},
        "tasks": [
            {"name": "cup", "payload_g": 250.0,
             "non_collaborative": {"box": {
                 "center_m": [0.27, 0.0, 0.46],
                 "half_extents_m": [0.03, 0.03, 0.03], "points": 80}}},
            {"name": "pickup", "payload_g": 150.0,
             "collaborative": {"box": {
                 "center_m": [0.34, 0.15, 0.02],
                 "half_extents_m": [0.03, 0.03, 0.03], "points": 80}},
             "non_collaborative": {"box": {
                 "center_m": [0.33, 0.12, -0.14],
                 "half_extents_m": [0.03, 0.03, 0.03], "points": 80}}},
            {"name": "stirring", "payload_g": 200.0,
             "non_collaborative": {"box": {
                 "center_m": [-0.31, 0.0, 0.44],
                 "half_extents_m": [0.03, 0.05, 0.04], "points": 80}}},
            {"name": "unreachable", "payload_g": 0.0,
             "non_collaborative": {"points_m": [[2.5, 0.0, 0.3]]}},
        ],
        "control": {
            "n_modules": 2,
            "mount_pitch_deg": 45.0,
            "rate_hz": 100.0,
            "duration_s": 60.0,
            "weights": {"orientation": 10.0, "position": 5.0,
                        "velocity": 10.0, "posture_active": 0.01,
                        "posture_passive": 0.0001},
            "gains": {"orientation": 8.0, "position": 5.0, "posture": 1.0},
            "limits": {"active_vel_rad_s": 3.0, "passive_vel_rad_s": 10.0,
                       "active_acc_rad_s2": 100.0,
                       "passive_acc_rad_s2": 400.0,
                       "hinge_limit_deg": 120.0},
            "damper_safety": 2.0,
            "collision_margin_m": 0.005,
            "loop_gain": 0.1,
            "disturbance_csv": None,
            "command_stream_csv": None,
        },
    }


# Schema tree: dict -> fixed keys; (validator,) for leaves.

def _number(path, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {type(v).__name__}", path)
    return float(v)


def _positive(path, v):
    x = _number(path, v)
    if x <= 0:
        raise ConfigError(f"must be positive, got {x}", path)
    return x


def _nonnegative(path, v):
    x = _number(path, v)
    if x < 0:
        raise ConfigError(f"must be >= 0, got {x}", path)
    return x


def _integer(path, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {type(v).__name__}", path)
    return v


def _positive_int(path, v):
    x = _integer(path, v)
    if x <= 0:
        raise ConfigError(f"must be a positive integer, got {x}", path)
    return x


def _string(path, v):
    if not isinstance(v, str) or not v:
        raise ConfigError("expected a non-empty string", path)
    return v


def _optional_string(path, v):
    if v is None:
        return None
    return _string(path, v)


def _vec3(path, v):
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError("expected a list of 3 numbers", path)
    return [_number(f"{path}[{i}]", x) for i, x in enumerate(v)]


def _check_dict(path, value, schema):
    if not isinstance(value, dict):
        raise ConfigError("expected an object", path)
    unknown = set(value) - set(schema)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}", path)
    missing = {k for k, s in schema.items()
               if not (isinstance(s, tuple) and len(s) == 2 and s[1] == "optional")
               and k not in value}
    if missing:
        raise ConfigError(f"missing key(s): {', '.join(sorted(missing))}", path)
    for key, sub in schema.items():
        if key not in value:
            continue
        subpath = f"{path}.{key}" if path else key
        rule = sub[0] if isinstance(sub, tuple) else sub
        if isinstance(rule, dict):
            _check_dict(subpath, value[key], rule)
        else:
            rule(subpath, value[key])


def _check_region(path, region):
    if not isinstance(region, dict):
        raise ConfigError("expected an object", path)
    if set(region) == {"box"}:
        _check_dict(f"{path}.box", region["box"], {
            "center_m": _vec3, "half_extents_m": _vec3,
            "points": _positive_int, "seed": (_integer, "optional"),
        })
    elif set(region) == {"points_m"}:
        pts = region["points_m"]
        if not isinstance(pts, list) or not pts:
            raise ConfigError("expected a non-empty list of points",
                              f"{path}.points_m")
        for i, p in enumerate(pts):
            _vec3(f"{path}.points_m[{i}]", p)
    else:
        raise ConfigError("region must contain exactly one of 'box' or "
                          "'points_m'", path)


def validate(config: dict) -> dict:
    """Schema-check a raw config dict; returns it unchanged on success."""
    if not isinstance(config, dict):
        raise ConfigError("top level must be an object", "")
    _check_dict("", config, {
        "seed": _integer,
        "anthropometry": {
            "upper_arm_m": _positive, "forearm_hand_m": _positive,
            "shoulder_left_m": _vec3, "shoulder_right_m": _vec3,
        },
        "visual_field": {"normal": _vec3, "offset_m": _number},
        "module": {
            "min_height_m": _positive, "max_height_m": _positive,
            "plate_radius_m": _positive, "theta_min_deg": _number,
            "theta_max_deg": _number, "max_tilt_deg": _positive,
            "strong_mass_g": _positive, "lightweight_mass_g": _positive,
        },
        "placements": lambda p, v: _check_placements(p, v),
        "sweep": {
            "n_min": _positive_int, "n_max": _positive_int,
            "samples": _positive_int, "reference_samples": _positive_int,
        },
        "tasks": lambda p, v: _check_tasks(p, v),
        "control": {
            "n_modules": _positive_int, "mount_pitch_deg": _number,
            "rate_hz": _positive, "duration_s": _positive,
            "weights": {"orientation": _nonnegative, "position": _nonnegative,
                        "velocity": _nonnegative,
                        "posture_active": _positive,
                        "posture_passive": _positive},
            "gains": {"orientation": _positive, "position": _positive,
                      "posture": _nonnegative},
            "limits": {"active_vel_rad_s": _positive,
                       "passive_vel_rad_s": _positive,
                       "active_acc_rad_s2": _positive,
                       "passive_acc_rad_s2": _positive,
                       "hinge_limit_deg": _positive},
            "damper_safety": _positive,
            "collision_margin_m": _nonnegative,
            "loop_gain": _nonnegative,
            "disturbance_csv": _optional_string,
            "command_stream_csv": _optional_string,
        },
    })
    module = config["module"]
    if module["min_height_m"] >= module["max_height_m"]:
        raise ConfigError("min_height_m must be below max_height_m", "module")
    if module["theta_min_deg"] >= module["theta_max_deg"]:
        raise ConfigError("theta_min_deg must be below theta_max_deg", "module")
    sweep = config["sweep"]
    if sweep["n_min"] > sweep["n_max"]:
        raise ConfigError("n_min must not exceed n_max", "sweep")
    return config


def _check_placements(path, value):
    if not isinstance(value, list) or not value:
        raise ConfigError("expected a non-empty list", path)
    seen = set()
    for i, item in enumerate(value):
        sub = f"{path}[{i}]"
        _check_dict(sub, item, {"id": _string, "position_m": _vec3,
                                "z_axis": _vec3})
        if float(np.linalg.norm(item["z_axis"])) < 1e-9:
            raise ConfigError("z_axis must be non-zero", f"{sub}.z_axis")
        if item["id"] in seen:
            raise ConfigError(f"duplicate placement id {item['id']!r}", sub)
        seen.add(item["id"])


def _check_tasks(path, value):
    if not isinstance(value, list):
        raise ConfigError("expected a list", path)
    seen = set()
    for i, item in enumerate(value):
        sub = f"{path}[{i}]"
        if not isinstance(item, dict):
            raise ConfigError("expected an object", sub)
        unknown = set(item) - {"name", "payload_g", "collaborative",
                               "non_collaborative"}
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}", sub)
        _string(f"{sub}.name", item.get("name"))
        _nonnegative(f"{sub}.payload_g", item.get("payload_g", 0.0))
        has_region = False
        for key in ("collaborative", "non_collaborative"):
            if item.get(key) is not None:
                _check_region(f"{sub}.{key}", item[key])
                has_region = True
        if not has_region:
            raise ConfigError("task needs a collaborative or "
                              "non_collaborative region", sub)
        if item["name"] in seen:
            raise ConfigError(f"duplicate task name {item['name']!r}", sub)
        seen.add(item["name"])


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", "")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column "
                          f"{exc.colno}: {exc.msg}", "")
    return validate(raw)


# -- builders --------------------------------------------------------------------

def build_anthropometry(config: dict) -> Anthropometry:
    a = config["anthropometry"]
    return Anthropometry(
        upper_arm_m=a["upper_arm_m"], forearm_hand_m=a["forearm_hand_m"],
        shoulder_left_m=tuple(a["shoulder_left_m"]),
        shoulder_right_m=tuple(a["shoulder_right_m"]))


def build_visual_field(config: dict) -> VisualField:
    v = config["visual_field"]
    return VisualField(normal=tuple(v["normal"]), offset_m=v["offset_m"])


def build_modules(config: dict) -> tuple[srl.ModuleKinematics, srl.ModuleKinematics]:
    m = config["module"]
    shared = dict(min_height_m=m["min_height_m"], max_height_m=m["max_height_m"],
                  plate_radius_m=m["plate_radius_m"],
                  theta_min_deg=m["theta_min_deg"],
                  theta_max_deg=m["theta_max_deg"],
                  max_tilt_deg=m["max_tilt_deg"])
    strong = srl.ModuleKinematics(module_type="strong",
                                  mass_g=m["strong_mass_g"], **shared)
    light = srl.ModuleKinematics(module_type="lightweight",
                                 mass_g=m["lightweight_mass_g"], **shared)
    return strong, light


def build_placements(config: dict) -> dict[str, srl.Placement]:
    out = {}
    for item in config["placements"]:
        out[item["id"]] = srl.Placement(
            item["id"], srl.frame_from_z(item["position_m"], item["z_axis"]))
    return out


def build_region(region: dict | None, task_seed) -> PointCloud | None:
    if region is None:
        return None
    if "points_m" in region:
        return PointCloud(np.asarray(region["points_m"], dtype=float))
    box = region["box"]
    seed = box.get("seed")
    if seed is None:
        seed = task_seed
    return reconfig.box_region(box["center_m"], box["half_extents_m"],
                               box["points"], seed)


def build_tasks(config: dict) -> dict[str, reconfig.TaskSpec]:
    """Task specs; box regions derive their seeds from the config seed and
    the task's position in the list, so documents are self-reproducing."""
    root = as_seed_sequence(config["seed"])
    children = root.spawn(2 * max(1, len(config["tasks"])))
    out = {}
    for i, item in enumerate(config["tasks"]):
        collab = build_region(item.get("collaborative"), children[2 * i])
        noncollab = build_region(item.get("non_collaborative"),
                                 children[2 * i + 1])
        out[item["name"]] = reconfig.TaskSpec(
            name=item["name"], collaborative=collab,
            non_collaborative=noncollab,
            payload_g=item.get("payload_g", 0.0))
    return out


def build_controller_params(config: dict) -> ControllerParams:
    c = config["control"]
    w, g, lim = c["weights"], c["gains"], c["limits"]
    return ControllerParams(
        weight_orientation=w["orientation"], weight_position=w["position"],
        weight_velocity=w["velocity"],
        weight_posture_active=w["posture_active"],
        weight_posture_passive=w["posture_passive"],
        gain_orientation=g["orientation"], gain_position=g["position"],
        gain_posture=g["posture"],
        damper_safety=c["damper_safety"],
        collision_margin_m=c["collision_margin_m"],
        loop_gain=c["loop_gain"],
        velocity_limit_active=lim["active_vel_rad_s"],
        velocity_limit_passive=lim["passive_vel_rad_s"],
        accel_limit_active=lim["active_acc_rad_s2"],
        accel_limit_passive=lim["passive_acc_rad_s2"],
        dt=1.0 / c["rate_hz"])


def sweep_range(config: dict) -> range:
    s = config["sweep"]
    return range(s["n_min"], s["n_max"] + 1)
