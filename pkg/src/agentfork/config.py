"""Run configuration: one flat file controls policy, relevance, and limits.

Recognized JSON keys (all optional, defaults shown by ``SimulatorConfig``):
spawn_threshold, memory_threshold, w1..w5, max_spawn_depth,
concurrent_spawn_limit, child_timeout_secs, alpha, beta, gamma, delta,
lambda_decay, cooldown_steps, embedding_dim, parent_blocks,
step_duration_secs, promote_threshold, semantic_merge_p,
price_per_1k_tokens, price_per_api_call, checkpoint_dir.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .memory import DefaultEmbedder, RelevanceWeights
from .policy import SpawnPolicyConfig
from .runtime import LoopConfig, RuntimeConfig


class ConfigError(ValueError):
    pass


@dataclass
class SimulatorConfig:
    spawn_threshold: float = 0.7
    memory_threshold: float = 0.5
    w1: float = 0.30
    w2: float = 0.20
    w3: float = 0.25
    w4: float = 0.15
    w5: float = 0.10
    max_spawn_depth: int = 3
    concurrent_spawn_limit: int = 4
    child_timeout_secs: float = 600.0
    alpha: float = 0.3
    beta: float = 0.3
    gamma: float = 0.2
    delta: float = 0.2
    lambda_decay: float = 0.1
    cooldown_steps: int = 5
    embedding_dim: int = 64
    parent_blocks: bool = True
    step_duration_secs: float = 1.0
    promote_threshold: float = 0.8
    semantic_merge_p: float = 0.73
    price_per_1k_tokens: float = 0.01
    price_per_api_call: float = 0.002
    checkpoint_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "SimulatorConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            config = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc))
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "SimulatorConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def validate(self) -> None:
        # Delegate range checks to the typed sub-configs they feed.
        self.policy_config()
        self.relevance_weights()
        self.runtime_config(seed=0)
        if self.embedding_dim <= 0:
            raise ConfigError("embedding_dim must be positive")
        if not 0.0 <= self.memory_threshold <= 1.0:
            raise ConfigError("memory_threshold must be in [0, 1]")
        if not 0.0 <= self.semantic_merge_p <= 1.0:
            raise ConfigError("semantic_merge_p must be in [0, 1]")
        if not 0.0 <= self.promote_threshold <= 1.0:
            raise ConfigError("promote_threshold must be in [0, 1]")
        if self.price_per_1k_tokens < 0 or self.price_per_api_call < 0:
            raise ConfigError("unit prices must be >= 0")

    def policy_config(self) -> SpawnPolicyConfig:
        try:
            return SpawnPolicyConfig(
                weights=(self.w1, self.w2, self.w3, self.w4, self.w5),
                spawn_threshold=self.spawn_threshold,
                max_depth=self.max_spawn_depth,
                concurrent_limit=self.concurrent_spawn_limit,
                cooldown_steps=self.cooldown_steps,
            )
        except ValueError as exc:
            raise ConfigError(str(exc))

    def relevance_weights(self) -> RelevanceWeights:
        try:
            return RelevanceWeights(
                alpha=self.alpha,
                beta=self.beta,
                gamma=self.gamma,
                delta_w=self.delta,
                lambda_decay=self.lambda_decay,
            )
        except ValueError as exc:
            raise ConfigError(str(exc))

    def runtime_config(self, seed: int) -> RuntimeConfig:
        try:
            return RuntimeConfig(
                child_timeout=self.child_timeout_secs,
                max_depth=self.max_spawn_depth,
                concurrent_limit=self.concurrent_spawn_limit,
                seed=seed,
                parent_blocks=self.parent_blocks,
                step_duration=self.step_duration_secs,
                checkpoint_dir=self.checkpoint_dir,
            )
        except ValueError as exc:
            raise ConfigError(str(exc))

    def loop_config(self, seed: int, semantic_merge_p: float | None = None) -> LoopConfig:
        return LoopConfig(
            policy=self.policy_config(),
            runtime=self.runtime_config(seed),
            relevance=self.relevance_weights(),
            embedder=DefaultEmbedder(self.embedding_dim),
            memory_threshold=self.memory_threshold,
            promote_threshold=self.promote_threshold,
            semantic_merge_p=self.semantic_merge_p if semantic_merge_p is None else semantic_merge_p,
        )
