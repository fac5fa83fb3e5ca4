import numpy as np


def random_directions(n_projections: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    directions = rng.normal(0.0, 1.0, (n_projections, dim))
    return directions / np.linalg.norm(directions, axis=-1, keepdims=True)


def sliced_wasserstein(real: np.ndarray, fake: np.ndarray, n_projections: int, seed: int) -> float:
    """Mean 1-D Wasserstein-1 distance over random unit projections.

    The larger sample is uniformly subsampled to the size of the smaller one so the sorted
    projections pair up exactly.

    :param real: (n, F) samples
    :param fake: (m, F) samples
    :param n_projections: Number of random directions
    :param seed: Seed of the directions and of the subsampling
    :returns: SWD estimate
    """
    real, fake = np.asarray(real, dtype=np.float64), np.asarray(fake, dtype=np.float64)
    if real.ndim != 2 or fake.ndim != 2 or real.shape[1] != fake.shape[1]:
        raise ValueError(f"Sample sets must share the feature width, got {real.shape} and {fake.shape}")
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("Sliced Wasserstein distance of an empty sample set")

    rng = np.random.default_rng(seed)
    n = min(len(real), len(fake))
    if len(real) > n:
        real = real[rng.choice(len(real), size=n, replace=False)]
    if len(fake) > n:
        fake = fake[rng.choice(len(fake), size=n, replace=False)]

    directions = random_directions(n_projections, real.shape[1], rng)
    real_proj = np.sort(real @ directions.T, axis=0)
    fake_proj = np.sort(fake @ directions.T, axis=0)
    return float(np.abs(real_proj - fake_proj).mean())
