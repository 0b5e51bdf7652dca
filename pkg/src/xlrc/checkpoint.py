"""Checkpoint persistence: JSON manifest plus raw float64 parameter blobs.

A checkpoint directory contains `manifest.json`, `vocab.json`, one
little-endian float64 blob per parameter under `params/`, and the Adam
moments under `optimizer/`. Serialization is canonical (sorted keys, fixed
layout), so save -> load -> save reproduces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .encoder import EncoderConfig, EncoderParams
from .fusion import FusionParams
from .span import SpanHeadParams
from .training import Adam, Model, ModelConfig

MANIFEST_FORMAT = 1


class CheckpointError(ValueError):
    """Raised for unreadable or inconsistent checkpoint directories."""


@dataclass
class CheckpointBundle:
    model: Model
    optimizer: Adam
    seed: int
    stage_index: int


def _write_blob(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_blob(path: Path, shape: tuple[int, ...]) -> np.ndarray:
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise CheckpointError(
            f"{path}: expected {expected} values for shape {shape}, "
            f"got {data.size}")
    return data.reshape(shape).copy()


def config_fingerprint(config: ModelConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(directory: str | Path, model: Model, optimizer: Adam,
                    seed: int = 0, stage_index: int = 0) -> None:
    directory = Path(directory)
    (directory / "params").mkdir(parents=True, exist_ok=True)
    (directory / "optimizer").mkdir(parents=True, exist_ok=True)

    params = model.named_parameters()
    param_entries = {}
    for name in sorted(params):
        rel = f"params/{name}.bin"
        _write_blob(directory / rel, params[name].values)
        param_entries[name] = {"shape": list(params[name].values.shape),
                               "file": rel}

    moment_entries = {}
    for name in sorted(optimizer.moments):
        m, v = optimizer.moments[name]
        m_rel = f"optimizer/{name}.m.bin"
        v_rel = f"optimizer/{name}.v.bin"
        _write_blob(directory / m_rel, m)
        _write_blob(directory / v_rel, v)
        moment_entries[name] = {"shape": list(m.shape),
                                "m_file": m_rel, "v_file": v_rel}

    manifest = {
        "format": MANIFEST_FORMAT,
        "seed": seed,
        "stage_index": stage_index,
        "config": model.config.to_dict(),
        "config_fingerprint": config_fingerprint(model.config),
        "params": param_entries,
        "optimizer": {
            "learning_rate": optimizer.learning_rate,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "step_count": optimizer.step_count,
            "moments": moment_entries,
        },
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    (directory / "vocab.json").write_text(
        json.dumps({"tokens": model.vocab.tokens}, ensure_ascii=False) + "\n",
        encoding="utf-8")


def load_checkpoint(directory: str | Path) -> CheckpointBundle:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"{directory}: no manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != MANIFEST_FORMAT:
        raise CheckpointError(
            f"{directory}: unsupported checkpoint format "
            f"{manifest.get('format')!r}")

    cfg = manifest["config"]
    config = ModelConfig(
        encoder=EncoderConfig(**cfg["encoder"]),
        source_langs=tuple(cfg["source_langs"]),
        scaled_fusion=bool(cfg["scaled_fusion"]),
        max_answer_len=int(cfg["max_answer_len"]),
    )
    if manifest["config_fingerprint"] != config_fingerprint(config):
        raise CheckpointError(f"{directory}: config fingerprint mismatch")

    vocab_doc = json.loads((directory / "vocab.json").read_text("utf-8"))
    vocab = Vocabulary.from_tokens(vocab_doc["tokens"])

    rng = np.random.default_rng(0)  # values are overwritten below
    h = config.encoder.hidden_dim
    model = Model(
        config=config,
        vocab=vocab,
        encoder=EncoderParams.init(config.encoder, rng),
        fusion=FusionParams.init(h, max(1, len(config.source_langs)), rng,
                                 scaled=config.scaled_fusion),
        span=SpanHeadParams.init(h, rng),
    )
    params = model.named_parameters()
    if set(params) != set(manifest["params"]):
        raise CheckpointError(
            f"{directory}: parameter names do not match the configuration")
    for name, entry in manifest["params"].items():
        arr = _read_blob(directory / entry["file"], tuple(entry["shape"]))
        if arr.shape != params[name].values.shape:
            raise CheckpointError(
                f"{directory}: shape mismatch for {name}: stored "
                f"{arr.shape}, expected {params[name].values.shape}")
        params[name].values = arr

    opt_doc = manifest["optimizer"]
    optimizer = Adam(opt_doc["learning_rate"], opt_doc["beta1"],
                     opt_doc["beta2"], opt_doc["eps"])
    optimizer.step_count = int(opt_doc["step_count"])
    for name, entry in opt_doc["moments"].items():
        shape = tuple(entry["shape"])
        optimizer.moments[name] = (
            _read_blob(directory / entry["m_file"], shape),
            _read_blob(directory / entry["v_file"], shape),
        )
    return CheckpointBundle(model=model, optimizer=optimizer,
                            seed=int(manifest["seed"]),
                            stage_index=int(manifest["stage_index"]))
