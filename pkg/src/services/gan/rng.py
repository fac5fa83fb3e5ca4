import zlib
from typing import Any

import numpy as np
import torch

STREAMS = ("init", "latent", "gumbel", "epsilon", "shuffle", "monitor")


def substream_seed(seed: int, name: str) -> int:
    """Derive a 63-bit seed for a named substream of a run seed."""
    state = np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))]).generate_state(1, dtype=np.uint64)[0]
    return int(state) & ((1 << 63) - 1)


class SeedStreams:
    """Named random streams all derived from one run seed.

    Every stochastic draw of a training run (latent vectors, Gumbel noise, interpolation weights,
    batch sampling, monitoring) reads from its own stream so that enabling or disabling one consumer
    never shifts another.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._torch: dict[str, torch.Generator] = {}
        self._numpy: dict[str, np.random.Generator] = {}

    def torch(self, name: str) -> torch.Generator:
        if name not in self._torch:
            self._torch[name] = torch.Generator(device="cpu").manual_seed(substream_seed(self.seed, name))
        return self._torch[name]

    def numpy(self, name: str) -> np.random.Generator:
        if name not in self._numpy:
            self._numpy[name] = np.random.default_rng(substream_seed(self.seed, f"numpy/{name}"))
        return self._numpy[name]

    def torch_states(self) -> dict[str, np.ndarray]:
        return {name: gen.get_state().numpy().copy() for name, gen in sorted(self._torch.items())}

    def numpy_states(self) -> dict[str, Any]:
        return {name: gen.bit_generator.state for name, gen in sorted(self._numpy.items())}

    def restore(self, torch_states: dict[str, np.ndarray], numpy_states: dict[str, Any]) -> None:
        for name, state in torch_states.items():
            self.torch(name).set_state(torch.from_numpy(np.ascontiguousarray(state, dtype=np.uint8)))
        for name, state in numpy_states.items():
            self.numpy(name).bit_generator.state = state
