"""Run configuration: defaults, file loading, and gateway construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..errors import ConfigurationError
from ..llm_gateway import LlmGateway, ReplayStore

MODES = ("live", "record", "replay")


@dataclass(frozen=True)
class PipelineConfig:
    top_k: int = 20
    token_budget: int = 4096
    max_iterations: int = 3
    max_extraction_retries: int = 1
    mode: str = "live"
    model: str = "default"
    temperature: float | None = None
    store_path: str | None = None  # replay/record store file
    base_url: str | None = None
    api_key: str | None = None
    out_dir: str = "out"


def _validate(config: PipelineConfig) -> PipelineConfig:
    if config.top_k < 1:
        raise ConfigurationError(f"top_k must be at least 1, got {config.top_k}")
    if config.token_budget < 1:
        raise ConfigurationError(
            f"token_budget must be at least 1, got {config.token_budget}")
    if config.max_iterations < 1:
        raise ConfigurationError(
            f"max_iterations must be at least 1, got {config.max_iterations}")
    if config.max_extraction_retries < 0:
        raise ConfigurationError("max_extraction_retries cannot be negative")
    if config.mode not in MODES:
        raise ConfigurationError(f"unknown mode '{config.mode}'")
    if config.mode in ("replay", "record") and not config.store_path:
        raise ConfigurationError(f"mode '{config.mode}' needs a store_path")
    return config


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Build a config from an optional JSON file plus keyword overrides.

    File keys mirror the dataclass fields; unknown keys are rejected rather
    than silently ignored. Overrides win over the file, the file over the
    defaults; None overrides are treated as absent.
    """
    values: dict = {}
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(f"config file '{path}' does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file '{path}' is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"config file '{path}' must hold a JSON object")
        known = {f.name for f in fields(PipelineConfig)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigurationError(
                f"config file '{path}' has unknown key '{unknown[0]}'")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigurationError(f"bad config value: {exc}") from exc
    return _validate(config)


def with_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    return _validate(replace(
        config, **{k: v for k, v in overrides.items() if v is not None}
    ))


def build_gateway(config: PipelineConfig, transport=None) -> LlmGateway:
    """Construct the completion gateway the way the config asks for.

    Replay loads an existing store; record loads the store when present so
    repeated runs append rather than clobber.
    """
    store = None
    if config.mode == "replay":
        store = ReplayStore.load(config.store_path)
    elif config.mode == "record":
        store_path = Path(config.store_path)
        if store_path.exists():
            store = ReplayStore.load(store_path)
        else:
            store = ReplayStore(path=store_path)
    return LlmGateway(
        mode=config.mode,
        store=store,
        base_url=config.base_url,
        api_key=config.api_key,
        transport=transport,
        model=config.model,
        temperature=config.temperature,
    )
