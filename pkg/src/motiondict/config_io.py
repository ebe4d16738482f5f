"""Training configuration files: one JSON document with three sections.

{
  "network": {... NetworkConfig fields or {"preset": "base", ...overrides}},
  "loss":    {... LossWeights fields},
  "train":   {... TrainConfig fields}
}

Missing sections fall back to defaults; a network section may name a
preset (base/middle/large) and override individual fields.
"""

from __future__ import annotations

import json
from dataclasses import asdict, replace
from pathlib import Path

from .networks import PRESETS, NetworkConfig
from .training import LossWeights, TrainConfig


def network_from_dict(payload: dict) -> NetworkConfig:
    payload = dict(payload)
    preset = payload.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
        return replace(PRESETS[preset], **payload)
    return NetworkConfig(**payload)


def load_train_bundle(path: str | Path | None) -> tuple[NetworkConfig, LossWeights, TrainConfig]:
    if path is None:
        return NetworkConfig(), LossWeights(), TrainConfig()
    config_file = Path(path)
    if not config_file.exists():
        raise FileNotFoundError(f"config file not found: {config_file}")
    payload = json.loads(config_file.read_text())
    network = network_from_dict(payload.get("network", {}))
    weights = LossWeights(**payload.get("loss", {}))
    train = TrainConfig(**payload.get("train", {}))
    return network, weights, train


def save_train_bundle(
    path: str | Path, network: NetworkConfig, weights: LossWeights, train: TrainConfig
) -> None:
    payload = {"network": asdict(network), "loss": asdict(weights), "train": asdict(train)}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
