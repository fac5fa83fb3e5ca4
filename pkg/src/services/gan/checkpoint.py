import logging
from pathlib import Path
from typing import Any

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from src.config import TrainingConfig
from src.exceptions import CheckpointError, ContainerFormatError
from src.services.storage import atomic_write, pack_container, unpack_container

from .networks import FieldCodes, GanModels, init_params

logger = logging.getLogger(__name__)

MAGIC = b"GMAC"
VERSION = 1


class CheckpointMeta(BaseModel):
    """Header fields of a generator checkpoint."""

    config: TrainingConfig
    seed: int
    class_name: str
    feature_names: list[str]
    field_codes: FieldCodes = Field(..., description="Per feature: codebook codes, or None for continuous")
    tau: float = Field(..., gt=0.0, description="Temperature of the last completed epoch")
    epoch: int = Field(..., ge=0, description="Completed epochs")
    counters: dict[str, int] = Field(default_factory=dict)


def _tensor_arrays(prefix: str, state: dict[str, torch.Tensor]) -> dict[str, np.ndarray]:
    return {f"{prefix}/{name}": tensor.detach().cpu().numpy().copy() for name, tensor in state.items()}


def _optimizer_payload(name: str, optimizer: torch.optim.Optimizer) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    state_dict = optimizer.state_dict()
    arrays, keys = {}, {}
    for index, slots in state_dict["state"].items():
        keys[str(index)] = sorted(slots)
        for slot, value in slots.items():
            arrays[f"optim/{name}/{index}/{slot}"] = torch.as_tensor(value).cpu().numpy().copy()
    return {"param_groups": state_dict["param_groups"], "state_keys": keys}, arrays


def _optimizer_state(name: str, payload: dict[str, Any], arrays: dict[str, np.ndarray]) -> dict[str, Any]:
    state = {
        int(index): {slot: torch.from_numpy(arrays[f"optim/{name}/{index}/{slot}"]) for slot in slots}
        for index, slots in payload["state_keys"].items()
    }
    return {"state": state, "param_groups": payload["param_groups"]}


def save_checkpoint(
    path: Path,
    meta: CheckpointMeta,
    models: GanModels,
    optimizers: dict[str, torch.optim.Optimizer],
    rng_torch: dict[str, np.ndarray],
    rng_numpy: dict[str, Any],
) -> None:
    """Atomically write a GMAC checkpoint with parameters, optimizer moments, counters and RNG positions."""
    arrays = _tensor_arrays("model", models.state_dict())
    optim_header = {}
    for name, optimizer in sorted(optimizers.items()):
        optim_header[name], optim_arrays = _optimizer_payload(name, optimizer)
        arrays.update(optim_arrays)
    arrays.update({f"rng/{name}": state for name, state in rng_torch.items()})
    header = {"meta": meta.model_dump(mode="json"), "optimizers": optim_header, "rng_numpy": rng_numpy}
    atomic_write(path, pack_container(MAGIC, VERSION, header, arrays))
    logger.debug(f"Checkpoint written to {path} at epoch {meta.epoch}")


class LoadedCheckpoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    meta: CheckpointMeta
    model_state: dict[str, torch.Tensor]
    optimizer_states: dict[str, dict[str, Any]]
    rng_torch: dict[str, np.ndarray]
    rng_numpy: dict[str, Any]


def load_checkpoint(path: Path) -> LoadedCheckpoint:
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        _, header, arrays = unpack_container(path.read_bytes(), MAGIC, VERSION)
        meta = CheckpointMeta.model_validate(header["meta"])
        model_state = {name.removeprefix("model/"): torch.from_numpy(a) for name, a in arrays.items() if name.startswith("model/")}
        optimizer_states = {name: _optimizer_state(name, payload, arrays) for name, payload in header["optimizers"].items()}
        rng_torch = {name.removeprefix("rng/"): a for name, a in arrays.items() if name.startswith("rng/")}
        return LoadedCheckpoint(
            meta=meta, model_state=model_state, optimizer_states=optimizer_states, rng_torch=rng_torch, rng_numpy=header["rng_numpy"]
        )
    except ContainerFormatError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"Malformed checkpoint {path}: {e}") from e


def restore_models(checkpoint: LoadedCheckpoint) -> GanModels:
    models = init_params(checkpoint.meta.seed, checkpoint.meta.config, checkpoint.meta.field_codes)
    try:
        models.load_state_dict(checkpoint.model_state)
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint parameters do not match the network layout: {e}") from e
    return models
