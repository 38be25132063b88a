"""Scenario configuration: schema, defaults, loading, and validation.

A scenario file is YAML (JSON, being a YAML subset, parses too). Top-level
sections: seed, duration_s, outputs, link, gain_model, clocks, cc, video,
flight_path, bs. Any of cc.frequencies_hz, flight_path.heights_m and
video.resolutions may be lists, which turns the scenario into a sweep axis.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from hashlib import sha256
from pathlib import Path
from typing import Any, Optional

import yaml

from .netem import (
    FixedPath,
    FlightPath,
    FlyOverPath,
    GainCapacityModel,
    JitterConfig,
    LinkConfig,
    WaypointPath,
)
from .video import Resolution, SUPPORTED_RESOLUTIONS


class ConfigError(Exception):
    category = "config"


class ConfigNotFoundError(ConfigError):
    category = "config-not-found"


class ConfigParseError(ConfigError):
    category = "config-parse"


class ConfigValidationError(ConfigError):
    category = "config-validation"


@dataclass(frozen=True)
class ClockSettings:
    sync_interval_s: float = 10.0
    max_residual_error_us: int = 1000
    drift_ppm_ground: float = 0.0
    drift_ppm_uav: float = 0.0


@dataclass(frozen=True)
class SticksSettings:
    kind: str = "zeros"  # zeros | constant | sine
    roll: int = 0
    pitch: int = 0
    yaw: int = 0
    thrust: int = 0
    amplitude: float = 0.5
    period_s: float = 4.0


@dataclass(frozen=True)
class CcSettings:
    enabled: bool = True
    frequencies_hz: tuple[float, ...] = (40.0,)
    frames: int = 10_000
    buffer_capacity_frames: int = 54
    poll_period_us: int = 20_000
    processing_time_us: int = 5_000
    stick: SticksSettings = field(default_factory=SticksSettings)


@dataclass(frozen=True)
class ControllerSettings:
    enabled: bool = True
    min_fps: float = 1.0
    max_fps: float = 30.0
    increase_step: float = 1.0
    decrease_factor: float = 0.85
    loss_threshold: float = 0.02
    delay_threshold_us: int = 250_000
    window_ms: int = 1000


@dataclass(frozen=True)
class VideoSettings:
    enabled: bool = False
    resolutions: tuple[str, ...] = ("320x240",)
    fps: float = 30.0
    controller: ControllerSettings = field(default_factory=ControllerSettings)
    nominal_bitrate_bps: Optional[float] = None  # default: per-resolution table
    size_jitter_cv: float = 0.2
    reference_fps: float = 30.0
    mtu_payload_bytes: int = 1400
    reassembly_timeout_ms: int = 500
    display_latency_us: int = 0


@dataclass(frozen=True)
class GainModelSettings:
    enabled: bool = False
    cap_min_bps: float = 2.0e6
    cap_max_bps: float = 8.5e6
    theta_edge_deg: float = 60.0
    rolloff_width_deg: float = 8.0

    def to_model(self) -> GainCapacityModel:
        return GainCapacityModel(
            cap_min_bps=self.cap_min_bps,
            cap_max_bps=self.cap_max_bps,
            theta_edge_deg=self.theta_edge_deg,
            rolloff_width_deg=self.rolloff_width_deg,
        )


@dataclass(frozen=True)
class FlightPathSettings:
    kind: str = "fixed"  # fixed | waypoints | flyover
    heights_m: tuple[float, ...] = (0.0,)
    distance_m: float = 10.0
    waypoints: tuple[tuple[float, float, float, float], ...] = ()
    offset_m: float = 1.0
    speed_mps: float = 0.5

    def to_path(self, height_m: float, duration_s: float) -> FlightPath:
        if self.kind == "fixed":
            return FixedPath(height_m=height_m, distance_m=self.distance_m)
        if self.kind == "waypoints":
            return WaypointPath(waypoints=self.waypoints)
        if self.kind == "flyover":
            return FlyOverPath(
                height_m=height_m,
                offset_m=self.offset_m,
                speed_mps=self.speed_mps,
                midpoint_s=duration_s / 2.0,
            )
        raise ConfigValidationError(f"unknown flight path kind {self.kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    duration_s: Optional[float] = None
    outputs: str = "results"
    link: LinkConfig = field(default_factory=LinkConfig)
    gain_model: GainModelSettings = field(default_factory=GainModelSettings)
    clocks: ClockSettings = field(default_factory=ClockSettings)
    cc: CcSettings = field(default_factory=CcSettings)
    video: VideoSettings = field(default_factory=VideoSettings)
    flight_path: FlightPathSettings = field(default_factory=FlightPathSettings)
    bs_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    antenna_tilt_deg: float = 10.0

    def is_sweep(self) -> bool:
        return (
            len(self.cc.frequencies_hz) > 1
            or len(self.flight_path.heights_m) > 1
            or len(self.video.resolutions) > 1
        )

    def resolved_duration_s(self) -> float:
        """Explicit duration, else the command send window plus a 2 s drain."""
        if self.duration_s is not None:
            return self.duration_s
        if self.cc.enabled and self.cc.frames > 0 and len(self.cc.frequencies_hz) == 1:
            return self.cc.frames / self.cc.frequencies_hz[0] + 2.0
        raise ConfigValidationError("duration_s is required for this scenario")

    def canonical_dict(self) -> dict:
        d = asdict(self)
        d.pop("outputs")
        d.pop("seed")
        return _tuples_to_lists(d)

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode("utf-8")
        return sha256(blob).hexdigest()[:12]


def _tuples_to_lists(obj):
    if isinstance(obj, dict):
        return {k: _tuples_to_lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tuples_to_lists(v) for v in obj]
    return obj


def _err(path: str, msg: str) -> ConfigValidationError:
    return ConfigValidationError(f"{path}: {msg}")


def _require_mapping(value: Any, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise _err(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise _err(path, f"unknown keys: {', '.join(sorted(map(str, unknown)))}")


def _get_number(d: dict, key: str, default, path: str, *, minimum=None, maximum=None, strict_min=False):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err(f"{path}.{key}", f"expected a number, got {v!r}")
    if minimum is not None and (v <= minimum if strict_min else v < minimum):
        op = ">" if strict_min else ">="
        raise _err(f"{path}.{key}", f"must be {op} {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise _err(f"{path}.{key}", f"must be <= {maximum}, got {v}")
    return v


def _get_int(d, key, default, path, **kw) -> Optional[int]:
    v = _get_number(d, key, default, path, **kw)
    if v is None:
        return None
    if int(v) != v:
        raise _err(f"{path}.{key}", f"expected an integer, got {v!r}")
    return int(v)


def _get_bool(d: dict, key: str, default: bool, path: str) -> bool:
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise _err(f"{path}.{key}", f"expected a boolean, got {v!r}")
    return v


def _get_list_or_scalar(d: dict, plural: str, singular: str, default, path: str) -> list:
    """Accepts either `frequency_hz: 40` or `frequencies_hz: [10, 20]`."""
    if plural in d and singular in d:
        raise _err(path, f"give either {singular} or {plural}, not both")
    if singular in d:
        return [d[singular]]
    v = d.get(plural, default)
    if not isinstance(v, list):
        return [v]
    if not v:
        raise _err(f"{path}.{plural}", "sweep list must be nonempty")
    return v


def _parse_jitter(d: dict, path: str) -> JitterConfig:
    d = _require_mapping(d, path)
    _check_keys(d, {"kind", "sigma_us", "clip_sigmas"}, path)
    kind = d.get("kind", "truncnorm")
    if kind not in ("none", "truncnorm"):
        raise _err(f"{path}.kind", f"expected 'none' or 'truncnorm', got {kind!r}")
    return JitterConfig(
        kind=kind,
        sigma_us=_get_int(d, "sigma_us", 1000, path, minimum=0),
        clip_sigmas=float(_get_number(d, "clip_sigmas", 3.0, path, minimum=0, strict_min=True)),
    )


def _parse_link(d: dict, path: str) -> LinkConfig:
    d = _require_mapping(d, path)
    _check_keys(
        d,
        {
            "base_one_way_delay_us",
            "jitter",
            "random_loss_prob",
            "uplink_capacity_bps",
            "downlink_capacity_bps",
            "queue_limit_bytes",
            "height_loss_table",
            "uplink_capacity_schedule",
        },
        path,
    )
    table = d.get("height_loss_table")
    if table is not None:
        if not isinstance(table, dict) or not table:
            raise _err(f"{path}.height_loss_table", "expected a nonempty height->probability mapping")
        entries = []
        for h, p in table.items():
            try:
                entries.append((float(h), float(p)))
            except (TypeError, ValueError):
                raise _err(f"{path}.height_loss_table", f"bad entry {h!r}: {p!r}") from None
        table = tuple(sorted(entries))
    schedule = d.get("uplink_capacity_schedule")
    if schedule is not None:
        if not isinstance(schedule, list) or not schedule:
            raise _err(f"{path}.uplink_capacity_schedule", "expected a nonempty list of [t_s, bps]")
        steps = []
        for item in schedule:
            if not isinstance(item, list) or len(item) != 2:
                raise _err(f"{path}.uplink_capacity_schedule", f"bad entry {item!r}")
            steps.append((int(float(item[0]) * 1_000_000), float(item[1])))
        schedule = tuple(sorted(steps))
    try:
        return LinkConfig(
            base_one_way_delay_us=_get_int(d, "base_one_way_delay_us", 13_830, path, minimum=0),
            jitter=_parse_jitter(d.get("jitter", {}), f"{path}.jitter"),
            random_loss_prob=float(
                _get_number(d, "random_loss_prob", 0.0, path, minimum=0.0, maximum=1.0)
            ),
            uplink_capacity_bps=float(
                _get_number(d, "uplink_capacity_bps", 8_780_000.0, path, minimum=0, strict_min=True)
            ),
            downlink_capacity_bps=float(
                _get_number(d, "downlink_capacity_bps", 16_570_000.0, path, minimum=0, strict_min=True)
            ),
            queue_limit_bytes=_get_int(d, "queue_limit_bytes", 262_144, path, minimum=1),
            height_loss_table=table,
            uplink_capacity_schedule=schedule,
        )
    except ValueError as e:
        raise _err(path, str(e)) from None


def _parse_gain(d: dict, path: str) -> GainModelSettings:
    d = _require_mapping(d, path)
    _check_keys(d, {"enabled", "cap_min_bps", "cap_max_bps", "theta_edge_deg", "rolloff_width_deg"}, path)
    settings = GainModelSettings(
        enabled=_get_bool(d, "enabled", False, path),
        cap_min_bps=float(_get_number(d, "cap_min_bps", 2.0e6, path, minimum=0, strict_min=True)),
        cap_max_bps=float(_get_number(d, "cap_max_bps", 8.5e6, path, minimum=0, strict_min=True)),
        theta_edge_deg=float(_get_number(d, "theta_edge_deg", 60.0, path, minimum=0.0, maximum=90.0)),
        rolloff_width_deg=float(
            _get_number(d, "rolloff_width_deg", 8.0, path, minimum=0, strict_min=True)
        ),
    )
    if settings.cap_min_bps >= settings.cap_max_bps:
        raise _err(path, "cap_min_bps must be < cap_max_bps")
    return settings


def _parse_clocks(d: dict, path: str) -> ClockSettings:
    d = _require_mapping(d, path)
    _check_keys(
        d, {"sync_interval_s", "max_residual_error_us", "drift_ppm_ground", "drift_ppm_uav"}, path
    )
    return ClockSettings(
        sync_interval_s=float(_get_number(d, "sync_interval_s", 10.0, path, minimum=0, strict_min=True)),
        max_residual_error_us=_get_int(d, "max_residual_error_us", 1000, path, minimum=0),
        drift_ppm_ground=float(_get_number(d, "drift_ppm_ground", 0.0, path)),
        drift_ppm_uav=float(_get_number(d, "drift_ppm_uav", 0.0, path)),
    )


def _parse_stick(d: dict, path: str) -> SticksSettings:
    d = _require_mapping(d, path)
    _check_keys(d, {"kind", "roll", "pitch", "yaw", "thrust", "amplitude", "period_s"}, path)
    kind = d.get("kind", "zeros")
    if kind not in ("zeros", "constant", "sine"):
        raise _err(f"{path}.kind", f"expected zeros|constant|sine, got {kind!r}")
    return SticksSettings(
        kind=kind,
        roll=_get_int(d, "roll", 0, path, minimum=-32768, maximum=32767),
        pitch=_get_int(d, "pitch", 0, path, minimum=-32768, maximum=32767),
        yaw=_get_int(d, "yaw", 0, path, minimum=-32768, maximum=32767),
        thrust=_get_int(d, "thrust", 0, path, minimum=-32768, maximum=32767),
        amplitude=float(_get_number(d, "amplitude", 0.5, path, minimum=0.0, maximum=1.0)),
        period_s=float(_get_number(d, "period_s", 4.0, path, minimum=0, strict_min=True)),
    )


def _parse_cc(d: dict, path: str) -> CcSettings:
    d = _require_mapping(d, path)
    _check_keys(
        d,
        {
            "enabled",
            "frequency_hz",
            "frequencies_hz",
            "frames",
            "buffer_capacity_frames",
            "poll_period_us",
            "processing_time_us",
            "stick",
        },
        path,
    )
    freqs = _get_list_or_scalar(d, "frequencies_hz", "frequency_hz", [40.0], path)
    parsed = []
    for f in freqs:
        if isinstance(f, bool) or not isinstance(f, (int, float)) or f <= 0:
            raise _err(f"{path}.frequencies_hz", f"frequencies must be > 0, got {f!r}")
        parsed.append(float(f))
    return CcSettings(
        enabled=_get_bool(d, "enabled", True, path),
        frequencies_hz=tuple(parsed),
        frames=_get_int(d, "frames", 10_000, path, minimum=1),
        buffer_capacity_frames=_get_int(d, "buffer_capacity_frames", 54, path, minimum=1),
        poll_period_us=_get_int(d, "poll_period_us", 20_000, path, minimum=1),
        processing_time_us=_get_int(d, "processing_time_us", 5_000, path, minimum=0),
        stick=_parse_stick(d.get("stick", {}), f"{path}.stick"),
    )


def _parse_controller(d: dict, path: str) -> ControllerSettings:
    d = _require_mapping(d, path)
    _check_keys(
        d,
        {
            "enabled",
            "min_fps",
            "max_fps",
            "increase_step",
            "decrease_factor",
            "loss_threshold",
            "delay_threshold_us",
            "window_ms",
        },
        path,
    )
    settings = ControllerSettings(
        enabled=_get_bool(d, "enabled", True, path),
        min_fps=float(_get_number(d, "min_fps", 1.0, path, minimum=0, strict_min=True)),
        max_fps=float(_get_number(d, "max_fps", 30.0, path, minimum=0, strict_min=True)),
        increase_step=float(_get_number(d, "increase_step", 1.0, path, minimum=0.0)),
        decrease_factor=float(_get_number(d, "decrease_factor", 0.85, path)),
        loss_threshold=float(_get_number(d, "loss_threshold", 0.02, path, minimum=0.0, maximum=1.0)),
        delay_threshold_us=_get_int(d, "delay_threshold_us", 250_000, path, minimum=1),
        window_ms=_get_int(d, "window_ms", 1000, path, minimum=1),
    )
    if settings.min_fps > settings.max_fps:
        raise _err(path, "min_fps must be <= max_fps")
    if not 0.0 < settings.decrease_factor < 1.0:
        raise _err(f"{path}.decrease_factor", "must be in (0, 1)")
    return settings


def _parse_video(d: dict, path: str) -> VideoSettings:
    d = _require_mapping(d, path)
    _check_keys(
        d,
        {
            "enabled",
            "resolution",
            "resolutions",
            "fps",
            "controller",
            "nominal_bitrate_bps",
            "size_jitter_cv",
            "reference_fps",
            "mtu_payload_bytes",
            "reassembly_timeout_ms",
            "display_latency_us",
        },
        path,
    )
    resolutions = _get_list_or_scalar(d, "resolutions", "resolution", ["320x240"], path)
    for r in resolutions:
        if not isinstance(r, str) or r not in SUPPORTED_RESOLUTIONS:
            raise _err(
                f"{path}.resolutions",
                f"unsupported resolution {r!r}; supported: {', '.join(SUPPORTED_RESOLUTIONS)}",
            )
    return VideoSettings(
        enabled=_get_bool(d, "enabled", False, path),
        resolutions=tuple(resolutions),
        fps=float(_get_number(d, "fps", 30.0, path, minimum=0, strict_min=True)),
        controller=_parse_controller(d.get("controller", {}), f"{path}.controller"),
        nominal_bitrate_bps=(
            None
            if d.get("nominal_bitrate_bps") is None
            else float(_get_number(d, "nominal_bitrate_bps", None, path, minimum=0, strict_min=True))
        ),
        size_jitter_cv=float(_get_number(d, "size_jitter_cv", 0.2, path, minimum=0.0)),
        reference_fps=float(_get_number(d, "reference_fps", 30.0, path, minimum=0, strict_min=True)),
        mtu_payload_bytes=_get_int(d, "mtu_payload_bytes", 1400, path, minimum=1),
        reassembly_timeout_ms=_get_int(d, "reassembly_timeout_ms", 500, path, minimum=1),
        display_latency_us=_get_int(d, "display_latency_us", 0, path, minimum=0),
    )


def _parse_flight_path(d: dict, path: str) -> FlightPathSettings:
    d = _require_mapping(d, path)
    _check_keys(
        d, {"kind", "height_m", "heights_m", "distance_m", "waypoints", "offset_m", "speed_mps"}, path
    )
    kind = d.get("kind", "fixed")
    if kind not in ("fixed", "waypoints", "flyover"):
        raise _err(f"{path}.kind", f"expected fixed|waypoints|flyover, got {kind!r}")
    heights = _get_list_or_scalar(d, "heights_m", "height_m", [0.0 if kind == "fixed" else 2.0], path)
    parsed_heights = []
    for h in heights:
        if isinstance(h, bool) or not isinstance(h, (int, float)) or h < 0:
            raise _err(f"{path}.heights_m", f"heights must be >= 0, got {h!r}")
        parsed_heights.append(float(h))
    waypoints = d.get("waypoints", [])
    if kind == "waypoints":
        if not isinstance(waypoints, list) or not waypoints:
            raise _err(f"{path}.waypoints", "waypoint path needs a nonempty waypoint list")
        parsed_wp = []
        for wp in waypoints:
            if not isinstance(wp, list) or len(wp) != 4:
                raise _err(f"{path}.waypoints", f"expected [t_s, x, y, h], got {wp!r}")
            parsed_wp.append(tuple(float(v) for v in wp))
        waypoints = tuple(parsed_wp)
    else:
        waypoints = ()
    return FlightPathSettings(
        kind=kind,
        heights_m=tuple(parsed_heights),
        distance_m=float(_get_number(d, "distance_m", 10.0, path, minimum=0.0)),
        waypoints=waypoints,
        offset_m=float(_get_number(d, "offset_m", 1.0, path, minimum=0.0)),
        speed_mps=float(_get_number(d, "speed_mps", 0.5, path, minimum=0, strict_min=True)),
    )


def resolve_config(raw: Any, source: str = "<config>") -> ScenarioConfig:
    """Validate a parsed mapping and fill defaults."""
    raw = _require_mapping(raw, source)
    _check_keys(
        raw,
        {
            "seed",
            "duration_s",
            "outputs",
            "link",
            "gain_model",
            "clocks",
            "cc",
            "video",
            "flight_path",
            "bs",
        },
        source,
    )
    if "seed" not in raw:
        raise _err(source, "seed is required")
    seed = _get_int(raw, "seed", None, source, minimum=0)
    duration = _get_number(raw, "duration_s", None, source, minimum=0, strict_min=True)
    outputs = raw.get("outputs", "results")
    if not isinstance(outputs, str) or not outputs:
        raise _err(f"{source}.outputs", f"expected a nonempty string, got {outputs!r}")
    bs_raw = _require_mapping(raw.get("bs", {}), f"{source}.bs")
    _check_keys(bs_raw, {"position", "antenna_tilt_deg"}, f"{source}.bs")
    pos = bs_raw.get("position", [0.0, 0.0, 0.0])
    if not isinstance(pos, list) or len(pos) != 3:
        raise _err(f"{source}.bs.position", f"expected [x, y, z], got {pos!r}")
    cfg = ScenarioConfig(
        seed=seed,
        duration_s=None if duration is None else float(duration),
        outputs=outputs,
        link=_parse_link(raw.get("link", {}), f"{source}.link"),
        gain_model=_parse_gain(raw.get("gain_model", {}), f"{source}.gain_model"),
        clocks=_parse_clocks(raw.get("clocks", {}), f"{source}.clocks"),
        cc=_parse_cc(raw.get("cc", {}), f"{source}.cc"),
        video=_parse_video(raw.get("video", {}), f"{source}.video"),
        flight_path=_parse_flight_path(raw.get("flight_path", {}), f"{source}.flight_path"),
        bs_position=tuple(float(v) for v in pos),
        antenna_tilt_deg=float(_get_number(bs_raw, "antenna_tilt_deg", 10.0, f"{source}.bs")),
    )
    if not cfg.cc.enabled and not cfg.video.enabled:
        raise _err(source, "at least one of cc.enabled / video.enabled must be true")
    if cfg.video.enabled and cfg.duration_s is None:
        raise _err(source, "duration_s is required when video is enabled")
    if cfg.duration_s is None and not cfg.cc.enabled:
        raise _err(source, "duration_s is required")
    if cfg.flight_path.kind != "fixed" and len(cfg.flight_path.heights_m) > 1:
        raise _err(source, "height sweeps are only supported on the fixed path")
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    """Load and validate a scenario file (YAML or JSON)."""
    p = Path(path)
    if not p.exists():
        raise ConfigNotFoundError(f"config file not found: {p}")
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigNotFoundError(f"cannot read config file {p}: {e}") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigParseError(f"cannot parse {p}: {e}") from e
    return resolve_config(raw, source=str(p))


def expand_sweep(cfg: ScenarioConfig) -> list[tuple[str, ScenarioConfig]]:
    """Expand sweep axes into (scenario_id, single-run config) pairs.

    Order is row-major over (frequency, height, resolution) as listed in the
    config. Member seeds are assigned by the harness from the combination
    index.
    """
    members: list[tuple[str, ScenarioConfig]] = []
    freqs = cfg.cc.frequencies_hz if cfg.cc.enabled else (None,)
    heights = cfg.flight_path.heights_m
    resolutions = cfg.video.resolutions if cfg.video.enabled else (None,)
    for f in freqs:
        for h in heights:
            for r in resolutions:
                parts = []
                member = cfg
                if f is not None:
                    member = replace(member, cc=replace(member.cc, frequencies_hz=(f,)))
                    parts.append(f"f{f:g}")
                parts.append(f"h{h:g}")
                member = replace(
                    member, flight_path=replace(member.flight_path, heights_m=(h,))
                )
                if r is not None:
                    member = replace(member, video=replace(member.video, resolutions=(r,)))
                    parts.append(f"r{r}")
                if member.flight_path.kind != "fixed":
                    parts.insert(0, member.flight_path.kind)
                members.append(("_".join(parts), member))
    return members


def scenario_id(cfg: ScenarioConfig) -> str:
    sid, _ = expand_sweep(cfg)[0]
    return sid


def make_resolution(cfg: ScenarioConfig) -> Resolution:
    return Resolution.parse(cfg.video.resolutions[0])
