"""Pipeline configuration: YAML loading, validation, gateway assembly."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .gateway import Gateway, HTTPBackend, MockBackend

CATALOG_DIMENSION = 100


@dataclass
class GatewaySettings:
    base_url: str = "http://localhost:8000/v1"
    api_key_env: str = "LEGALSTYLE_API_KEY"
    models: dict = field(
        default_factory=lambda: {
            "degrade": "small-chat",
            "restore": "medium-chat",
            "identify": "large-chat",
            "judge": "large-chat",
            "embed": "embedder",
        }
    )
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 8
    rate_limit_per_s: float = 0.0
    mock_embedding_dim: int = 64
    audit_log: str = ""  # filename inside the run directory; empty disables


@dataclass
class PipelineConfig:
    backend: str = "mock"
    seed: int = 0
    n_steps: int = 4000
    x: int = 10
    y: int = 10
    k: int = 25
    lam: float = 1.0
    fusion_objective: float = 0.5
    fusion_subjective: float = 0.5
    min_preservation: float = 0.9
    max_attempts: int = 3
    max_workers: int = 4
    gateway: GatewaySettings = field(default_factory=GatewaySettings)

    def validate(self) -> None:
        if self.backend not in ("mock", "live"):
            raise ConfigError(f"backend must be 'mock' or 'live', got {self.backend!r}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if not 1 <= self.k <= CATALOG_DIMENSION:
            raise ConfigError(f"k must be in [1, {CATALOG_DIMENSION}], got {self.k}")
        if self.x < 1 or self.y < 1:
            raise ConfigError(f"x and y must be >= 1, got x={self.x}, y={self.y}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if math.fsum((self.fusion_objective, self.fusion_subjective)) != 1.0:
            raise ConfigError("fusion weights must sum to exactly 1.0")
        if not 0.0 <= self.min_preservation <= 1.0:
            raise ConfigError("min_preservation must be in [0, 1]")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.max_workers < 1:
            raise ConfigError("max_workers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "seed": self.seed,
            "n_steps": self.n_steps,
            "x": self.x,
            "y": self.y,
            "k": self.k,
            "lambda": self.lam,
            "fusion": {"objective": self.fusion_objective, "subjective": self.fusion_subjective},
            "min_preservation": self.min_preservation,
            "max_attempts": self.max_attempts,
            "max_workers": self.max_workers,
            "gateway": {
                "base_url": self.gateway.base_url,
                "api_key_env": self.gateway.api_key_env,
                "models": dict(self.gateway.models),
                "timeout": self.gateway.timeout,
                "max_retries": self.gateway.max_retries,
                "backoff_base": self.gateway.backoff_base,
                "max_in_flight": self.gateway.max_in_flight,
                "rate_limit_per_s": self.gateway.rate_limit_per_s,
                "mock_embedding_dim": self.gateway.mock_embedding_dim,
                "audit_log": self.gateway.audit_log,
            },
        }

    def sha256(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: Path | str | None = None) -> PipelineConfig:
    config = PipelineConfig()
    if path is None:
        return config
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    pipeline = raw.get("pipeline", {})
    config.backend = raw.get("backend", config.backend)
    config.seed = int(raw.get("seed", config.seed))
    config.n_steps = int(pipeline.get("n_steps", config.n_steps))
    config.x = int(pipeline.get("x", config.x))
    config.y = int(pipeline.get("y", config.y))
    config.k = int(pipeline.get("k", config.k))
    config.lam = float(pipeline.get("lambda", config.lam))
    fusion = pipeline.get("fusion", {})
    config.fusion_objective = float(fusion.get("objective", config.fusion_objective))
    config.fusion_subjective = float(fusion.get("subjective", config.fusion_subjective))
    config.min_preservation = float(pipeline.get("min_preservation", config.min_preservation))
    config.max_attempts = int(pipeline.get("max_attempts", config.max_attempts))
    config.max_workers = int(pipeline.get("max_workers", config.max_workers))
    gw = raw.get("gateway", {})
    config.gateway.base_url = gw.get("base_url", config.gateway.base_url)
    config.gateway.api_key_env = gw.get("api_key_env", config.gateway.api_key_env)
    config.gateway.models.update(gw.get("models", {}))
    config.gateway.timeout = float(gw.get("timeout", config.gateway.timeout))
    config.gateway.max_retries = int(gw.get("max_retries", config.gateway.max_retries))
    config.gateway.backoff_base = float(gw.get("backoff_base", config.gateway.backoff_base))
    config.gateway.max_in_flight = int(gw.get("max_in_flight", config.gateway.max_in_flight))
    config.gateway.rate_limit_per_s = float(
        gw.get("rate_limit_per_s", config.gateway.rate_limit_per_s)
    )
    config.gateway.mock_embedding_dim = int(
        gw.get("mock_embedding_dim", config.gateway.mock_embedding_dim)
    )
    config.gateway.audit_log = gw.get("audit_log", config.gateway.audit_log)
    return config


def build_gateway(config: PipelineConfig, audit_path: Path | None = None) -> Gateway:
    if config.backend == "mock":
        backend = MockBackend(seed=config.seed, embedding_dim=config.gateway.mock_embedding_dim)
        return Gateway(
            backends={"default": backend},
            max_in_flight=config.gateway.max_in_flight,
            rate_limit_per_s=config.gateway.rate_limit_per_s,
            audit_path=audit_path,
        )
    api_key = os.environ.get(config.gateway.api_key_env, "")
    backends: dict[str, object] = {}
    cache: dict[str, HTTPBackend] = {}
    embed_model = config.gateway.models.get("embed", "embedder")
    for role, model in config.gateway.models.items():
        if model not in cache:
            cache[model] = HTTPBackend(
                base_url=config.gateway.base_url,
                api_key=api_key,
                chat_model=model,
                embed_model=embed_model,
                timeout=config.gateway.timeout,
                max_retries=config.gateway.max_retries,
                backoff_base=config.gateway.backoff_base,
            )
        backends[role] = cache[model]
    return Gateway(
        backends=backends,
        max_in_flight=config.gateway.max_in_flight,
        rate_limit_per_s=config.gateway.rate_limit_per_s,
        audit_path=audit_path,
    )
