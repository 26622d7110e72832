"""Scenario configuration: loading, validation, defaults.

Scenarios are JSON documents. Units are bits, seconds, Hz, and dB throughout;
"kb" in documentation always means 1000 bits. Every field is optional; applied
defaults are collected on the config so the CLI can echo them.

Environment overrides (applied before validation):
  MEGSIM_MASTER_SEED, MEGSIM_TRIALS, MEGSIM_SNR_DB, MEGSIM_ES_COUNT
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .channel import ChannelSpec
from .content import MULTI_ES_PROTOCOLS, PROTOCOL_IDS
from .engine import DeviceSpec, WorkModel
from .metrics import OverheadSizes
from .pipeline import PipelineParams
from .protocols import PlanContext
from .streams import derive_seed

# alternate names two of the workflows are sometimes known by
PROTOCOL_ALIASES = {"BIUG": "EIUG", "UIBG": "UIEG"}

ENV_PREFIX = "MEGSIM_"

DEFAULT_PROTOCOLS = ("LOCAL", "CENTRAL", "UIEG", "EIUG", "CIAG", "ESUC")


class ScenarioError(ValueError):
    """Configuration rejected before any simulation starts."""


@dataclass
class ArrivalSpec:
    """Copies of each request injected into one shared simulation."""

    count: int = 1
    spacing_s: float = 0.0


@dataclass
class BackgroundSpec:
    """Poisson stream of foreign compute jobs occupying one device."""

    device: str = "ES1"
    rate_hz: float = 1.0
    work_units: float = 500_000.0
    horizon_s: float = 5.0


@dataclass
class ScenarioConfig:
    master_seed: int = 12061
    protocols: tuple[str, ...] = DEFAULT_PROTOCOLS
    trials: int = 100
    es_count: int = 1
    selection_policy: object = "min_distortion_oracle"
    broadcast_uplink: bool = True
    latent_dim: int = 64
    height: int = 64
    width: int = 64
    pool_factor: int = 8
    text_dim: int = 8
    text_mix_weight: float = 0.25
    basis_seed: int | None = None
    gen_seed: int | None = None
    es_gen_seeds: tuple[int, ...] | None = None
    text_seed: int | None = None
    request_image_scale: float = 0.25
    snr_db: float = -20.0
    bandwidth_hz: float = 1e6
    energy_mode: str = "per_symbol"
    reference_symbol_count: int | None = None
    image_bits: int | None = None
    seed_bits: int | None = None
    text_bits: int = 1000
    sketch_bits: int | None = None
    bits_per_pixel: int = 8
    bits_per_feature: int = 32
    ue_compute_rate: float = 1e6
    es_compute_rate: float = 1e7
    work_model: WorkModel = field(default_factory=WorkModel)
    arrivals: ArrivalSpec = field(default_factory=ArrivalSpec)
    background: BackgroundSpec | None = None
    applied_defaults: list[str] = field(default_factory=list)

    # ----- derived views -----------------------------------------------

    def pipeline_params(self) -> PipelineParams:
        return PipelineParams(
            latent_dim=self.latent_dim,
            height=self.height,
            width=self.width,
            pool_factor=self.pool_factor,
            basis_seed=self.resolved_basis_seed,
            gen_seed=self.resolved_gen_seed,
            es_gen_seeds=self.resolved_es_gen_seeds,
            text_dim=self.text_dim,
            text_seed=self.resolved_text_seed,
            text_mix_weight=self.text_mix_weight,
        )

    @property
    def resolved_basis_seed(self) -> int:
        return self.basis_seed if self.basis_seed is not None else derive_seed(
            self.master_seed, "pipeline", "basis")

    @property
    def resolved_gen_seed(self) -> int:
        return self.gen_seed if self.gen_seed is not None else derive_seed(
            self.master_seed, "pipeline", "generator")

    @property
    def resolved_text_seed(self) -> int:
        return self.text_seed if self.text_seed is not None else derive_seed(
            self.master_seed, "pipeline", "text")

    @property
    def resolved_es_gen_seeds(self) -> tuple[int, ...]:
        if self.es_gen_seeds is not None:
            return tuple(self.es_gen_seeds)
        return tuple(
            derive_seed(self.master_seed, "pipeline", "es_generator", i)
            for i in range(self.es_count)
        )

    @property
    def resolved_image_bits(self) -> int:
        if self.image_bits is not None:
            return self.image_bits
        return self.height * self.width * self.bits_per_pixel

    @property
    def resolved_seed_bits(self) -> int:
        if self.seed_bits is not None:
            return self.seed_bits
        return self.latent_dim * self.bits_per_feature

    @property
    def resolved_sketch_bits(self) -> int:
        if self.sketch_bits is not None:
            return self.sketch_bits
        return self.resolved_image_bits // (self.pool_factor * self.pool_factor)

    def channel_spec(self) -> ChannelSpec:
        return ChannelSpec(
            snr_db=self.snr_db,
            bandwidth_hz=self.bandwidth_hz,
            energy_mode=self.energy_mode,
            reference_symbol_count=self.reference_symbol_count,
        )

    def devices(self) -> dict[str, DeviceSpec]:
        out = {"UE": DeviceSpec(id="UE", device_class="UE",
                                compute_rate=self.ue_compute_rate)}
        for i in range(1, max(self.es_count, 1) + 1):
            out[f"ES{i}"] = DeviceSpec(id=f"ES{i}", device_class="ES",
                                       compute_rate=self.es_compute_rate)
        return out

    def plan_context(self) -> PlanContext:
        return PlanContext(
            latent_dim=self.latent_dim,
            height=self.height,
            width=self.width,
            pool_factor=self.pool_factor,
            image_bits=self.resolved_image_bits,
            seed_bits=self.resolved_seed_bits,
            text_bits=self.text_bits,
            sketch_bits=self.resolved_sketch_bits,
            es_count=self.es_count,
            broadcast_uplink=self.broadcast_uplink,
        )

    def overhead_sizes(self) -> OverheadSizes:
        return OverheadSizes(
            image_bits=self.resolved_image_bits,
            seed_bits=self.resolved_seed_bits,
            text_bits=self.text_bits,
            sketch_bits=self.resolved_sketch_bits,
            es_count=self.es_count,
            broadcast_uplink=self.broadcast_uplink,
        )


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ScenarioError(message)


def validate_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """Reject invalid configurations before any simulation starts."""
    _require(cfg.trials >= 1, "trials: must be >= 1")
    _require(cfg.es_count >= 1, "es_count: must be >= 1")
    _require(bool(cfg.protocols), "protocols: list must not be empty")
    for pid in cfg.protocols:
        _require(pid in PROTOCOL_IDS, f"protocols: unknown protocol {pid!r}")
        if pid in MULTI_ES_PROTOCOLS:
            _require(cfg.es_count >= 2, f"es_count: {pid} requires es_count >= 2")
    _require(cfg.latent_dim >= 1, "latent_dim: must be >= 1")
    _require(cfg.height >= 1 and cfg.width >= 1, "height/width: must be >= 1")
    _require(cfg.latent_dim <= cfg.height * cfg.width,
             "latent_dim: must not exceed height*width")
    _require(cfg.pool_factor >= 1, "pool_factor: must be >= 1")
    _require(cfg.height % cfg.pool_factor == 0, "pool_factor: k must divide height")
    _require(cfg.width % cfg.pool_factor == 0, "pool_factor: k must divide width")
    _require(0.0 <= cfg.text_mix_weight <= 1.0, "text_mix_weight: must be in [0, 1]")
    _require(cfg.bandwidth_hz > 0, "bandwidth_hz: must be positive")
    _require(cfg.energy_mode in ("per_symbol", "per_message"),
             "energy_mode: must be per_symbol or per_message")
    if cfg.energy_mode == "per_message":
        _require(bool(cfg.reference_symbol_count) and cfg.reference_symbol_count > 0,
                 "reference_symbol_count: required and positive in per_message mode")
    _require(cfg.ue_compute_rate > 0, "ue_compute_rate: must be positive")
    _require(cfg.es_compute_rate > 0, "es_compute_rate: must be positive")
    _require(cfg.text_bits > 0, "text_bits: must be positive")
    for name in ("image_bits", "seed_bits", "sketch_bits"):
        value = getattr(cfg, name)
        if value is not None:
            _require(value > 0, f"{name}: must be positive when given")
    _require(cfg.bits_per_pixel >= 1, "bits_per_pixel: must be >= 1")
    _require(cfg.bits_per_feature >= 1, "bits_per_feature: must be >= 1")
    _require(cfg.arrivals.count >= 1, "arrivals.count: must be >= 1")
    _require(cfg.arrivals.spacing_s >= 0, "arrivals.spacing_s: must be >= 0")
    _require(cfg.request_image_scale > 0, "request_image_scale: must be positive")
    if cfg.background is not None:
        bg = cfg.background
        _require(bg.rate_hz > 0, "background.rate_hz: must be positive")
        _require(bg.work_units >= 0, "background.work_units: must be >= 0")
        _require(bg.horizon_s > 0, "background.horizon_s: must be positive")
        valid_devices = {"UE"} | {f"ES{i}" for i in range(1, cfg.es_count + 1)}
        _require(bg.device in valid_devices,
                 f"background.device: {bg.device!r} is not a configured device")
    policy = cfg.selection_policy
    if isinstance(policy, tuple):
        _require(len(policy) == 2 and policy[0] == "fixed_index",
                 "selection_policy: tuple form must be ('fixed_index', i)")
    else:
        _require(policy in ("first", "min_distortion_oracle"),
                 f"selection_policy: unknown policy {policy!r}")
    if cfg.es_gen_seeds is not None:
        _require(len(cfg.es_gen_seeds) >= cfg.es_count,
                 "es_gen_seeds: need one seed per edge server")
    return cfg


_TOP_LEVEL_KEYS = {
    "master_seed", "protocols", "trials", "es_count", "selection_policy",
    "broadcast_uplink", "pipeline", "channel", "payloads", "devices",
    "work_model", "arrivals", "background",
}

_SECTION_FIELDS = {
    "pipeline": {
        "latent_dim", "height", "width", "pool_factor", "text_dim",
        "text_mix_weight", "basis_seed", "gen_seed", "es_gen_seeds", "text_seed",
        "request_image_scale",
    },
    "channel": {"snr_db", "bandwidth_hz", "energy_mode", "reference_symbol_count"},
    "payloads": {
        "image_bits", "seed_bits", "text_bits", "sketch_bits",
        "bits_per_pixel", "bits_per_feature",
    },
    "devices": {"ue_compute_rate", "es_compute_rate"},
}


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Build and validate a config from parsed JSON, recording applied defaults."""
    if not isinstance(raw, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")

    kwargs: dict = {}
    explicit: set[str] = set()

    def take(section: dict, key: str, field_name: str | None = None):
        field_name = field_name or key
        if key in section:
            kwargs[field_name] = section[key]
            explicit.add(field_name)

    for key in ("master_seed", "trials", "es_count", "broadcast_uplink"):
        take(raw, key)
    if "protocols" in raw:
        normalized = []
        for pid in raw["protocols"]:
            pid = str(pid).upper()
            normalized.append(PROTOCOL_ALIASES.get(pid, pid))
        kwargs["protocols"] = tuple(normalized)
        explicit.add("protocols")
    if "selection_policy" in raw:
        policy = raw["selection_policy"]
        if isinstance(policy, dict) and "fixed_index" in policy:
            policy = ("fixed_index", int(policy["fixed_index"]))
        kwargs["selection_policy"] = policy
        explicit.add("selection_policy")

    for section_name, allowed in _SECTION_FIELDS.items():
        section = raw.get(section_name, {})
        if not isinstance(section, dict):
            raise ScenarioError(f"{section_name}: must be a JSON object")
        bad = set(section) - allowed
        if bad:
            raise ScenarioError(f"{section_name}: unknown keys {sorted(bad)}")
        for key in allowed:
            take(section, key)
    if kwargs.get("es_gen_seeds") is not None:
        kwargs["es_gen_seeds"] = tuple(kwargs["es_gen_seeds"])

    if "work_model" in raw:
        try:
            kwargs["work_model"] = WorkModel(**raw["work_model"])
        except TypeError as exc:
            raise ScenarioError(f"work_model: {exc}") from None
        explicit.add("work_model")
    if "arrivals" in raw:
        kwargs["arrivals"] = ArrivalSpec(**raw["arrivals"])
        explicit.add("arrivals")
    if raw.get("background") is not None:
        kwargs["background"] = BackgroundSpec(**raw["background"])
        explicit.add("background")

    try:
        cfg = ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ScenarioError(str(exc)) from None

    _apply_env_overrides(cfg)

    defaulted = []
    for f in fields(ScenarioConfig):
        if f.name in ("applied_defaults",):
            continue
        if f.name not in explicit:
            defaulted.append(f"{f.name}={getattr(cfg, f.name)!r}")
    cfg.applied_defaults = defaulted
    return validate_config(cfg)


def _apply_env_overrides(cfg: ScenarioConfig) -> None:
    mapping = {
        "MASTER_SEED": ("master_seed", int),
        "TRIALS": ("trials", int),
        "SNR_DB": ("snr_db", float),
        "ES_COUNT": ("es_count", int),
    }
    for suffix, (attr, cast) in mapping.items():
        value = os.environ.get(ENV_PREFIX + suffix)
        if value is not None:
            try:
                setattr(cfg, attr, cast(value))
            except ValueError:
                raise ScenarioError(
                    f"environment override {ENV_PREFIX}{suffix}: cannot parse {value!r}"
                ) from None


def load_scenario(path) -> ScenarioConfig:
    """Load, override, and validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return config_from_dict(raw)
