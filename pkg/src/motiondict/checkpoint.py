"""Checkpoint directory format: JSON manifest plus raw float32 tensor data.

Layout:
    <dir>/manifest.json   config, step, rng seed, semantic labels, and a
                          sorted tensor index (name, shape, offset, bytes,
                          sha256) into the data file
    <dir>/tensors.bin     every tensor as one contiguous little-endian
                          float32 blob, concatenated in index order

Round-trips are bitwise: save -> load -> save reproduces byte-identical
files, and a loaded model's forward pass matches the pre-save one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .networks import Animator, Discriminator, NetworkConfig
from .training import LossWeights, TrainConfig, TrainState

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "tensors.bin"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Missing files, failed checksums, or malformed manifests."""


class ConfigMismatchError(CheckpointError):
    """Stored configuration conflicts with the expected one."""


def _named_tensors(state: TrainState) -> dict[str, torch.Tensor]:
    tensors: dict[str, torch.Tensor] = {}
    for name, value in state.model.state_dict().items():
        tensors[f"model/{name}"] = value
    for name, value in state.discriminator.state_dict().items():
        tensors[f"disc/{name}"] = value
    for prefix, optimizer, module in (
        ("opt_g", state.opt_generator, state.model),
        ("opt_d", state.opt_discriminator, state.discriminator),
    ):
        param_names = {id(p): n for n, p in module.named_parameters()}
        for param, opt_state in optimizer.state.items():
            name = param_names[id(param)]
            for key, value in opt_state.items():
                if torch.is_tensor(value):
                    tensors[f"{prefix}/{name}/{key}"] = value
    return tensors


def save_checkpoint(state: TrainState, path: Path | str) -> dict:
    """Write manifest + blob; returns the manifest dict."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    tensors = _named_tensors(state)
    index = []
    blob = bytearray()
    for name in sorted(tensors):
        tensor = tensors[name].detach().to(torch.float32).contiguous()
        raw = tensor.numpy().astype("<f4", copy=False).tobytes()
        index.append(
            {
                "name": name,
                "shape": list(tensor.shape),
                "dtype": "float32",
                "offset": len(blob),
                "nbytes": len(raw),
                "sha256": hashlib.sha256(raw).hexdigest(),
            }
        )
        blob.extend(raw)

    labels = getattr(state, "labels", None) or {}
    manifest = {
        "format_version": FORMAT_VERSION,
        "step": state.step,
        "rng_seed": state.rng_seed,
        "config": {
            "network": asdict(state.network_config),
            "loss": asdict(state.weights),
            "train": asdict(state.train_config),
        },
        "labels": labels,
        "blob": BLOB_NAME,
        "blob_sha256": hashlib.sha256(bytes(blob)).hexdigest(),
        "tensors": index,
    }
    (out / BLOB_NAME).write_bytes(bytes(blob))
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(path: Path | str) -> dict:
    manifest_file = Path(path) / MANIFEST_NAME
    if not manifest_file.exists():
        raise CheckpointError(f"no {MANIFEST_NAME} under {path}")
    return json.loads(manifest_file.read_text())


def write_manifest(path: Path | str, manifest: dict) -> None:
    (Path(path) / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_tensors(path: Path, manifest: dict) -> dict[str, torch.Tensor]:
    blob_file = path / manifest["blob"]
    if not blob_file.exists():
        raise CheckpointError(f"missing tensor blob {blob_file}")
    blob = blob_file.read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise CheckpointError("tensor blob checksum mismatch")
    tensors = {}
    for entry in manifest["tensors"]:
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise CheckpointError(f"checksum mismatch for tensor {entry['name']}")
        array = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
        tensors[entry["name"]] = torch.from_numpy(array)
    return tensors


def _configs_from_manifest(manifest: dict) -> tuple[NetworkConfig, LossWeights, TrainConfig]:
    cfg = manifest["config"]
    return (
        NetworkConfig(**cfg["network"]),
        LossWeights(**cfg["loss"]),
        TrainConfig(**cfg["train"]),
    )


def _load_module(module, tensors: dict[str, torch.Tensor], prefix: str) -> None:
    state_dict = {}
    for name in module.state_dict():
        key = f"{prefix}/{name}"
        if key not in tensors:
            raise CheckpointError(f"missing tensor {key}")
        state_dict[name] = tensors[key]
    module.load_state_dict(state_dict)


def _load_optimizer(optimizer, module, tensors: dict[str, torch.Tensor], prefix: str) -> None:
    for name, param in module.named_parameters():
        entries = {
            key.rsplit("/", 1)[1]: value
            for key, value in tensors.items()
            if key.startswith(f"{prefix}/{name}/")
        }
        if entries:
            optimizer.state[param] = {k: v.clone() for k, v in entries.items()}


def load_checkpoint(
    path: Path | str, expected_network: NetworkConfig | None = None
) -> TrainState:
    """Rebuild a full TrainState (model, discriminator, optimizer moments)."""
    path = Path(path)
    manifest = read_manifest(path)
    network, weights, train = _configs_from_manifest(manifest)
    if expected_network is not None and network != expected_network:
        raise ConfigMismatchError(
            f"checkpoint network config {network} != expected {expected_network}"
        )
    tensors = _read_tensors(path, manifest)
    state = TrainState(network, weights, train)
    _load_module(state.model, tensors, "model")
    _load_module(state.discriminator, tensors, "disc")
    _load_optimizer(state.opt_generator, state.model, tensors, "opt_g")
    _load_optimizer(state.opt_discriminator, state.discriminator, tensors, "opt_d")
    state.step = manifest["step"]
    state.rng_seed = manifest["rng_seed"]
    state.labels = dict(manifest.get("labels") or {})
    return state


def load_animator(path: Path | str) -> tuple[Animator, dict]:
    """Inference-only load: the animator in eval mode plus the manifest."""
    path = Path(path)
    manifest = read_manifest(path)
    network, _, _ = _configs_from_manifest(manifest)
    tensors = _read_tensors(path, manifest)
    model = Animator(network)
    _load_module(model, tensors, "model")
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model, manifest
