import logging
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.decomposition import PCA

from src.exceptions import DataError
from src.schemas.flows.models import EncodedDataset

logger = logging.getLogger(__name__)

DEGENERATE_VARIANCE = 1e-12


class SharedProjection:
    """PCA basis fitted on standardized real rows and applied unchanged to every other set."""

    def __init__(self, n_components: int = 2):
        self.n_components = n_components
        self.mean_: np.ndarray | None = None
        self.scale_: np.ndarray | None = None
        self.pca_: PCA | None = None
        self.live_: np.ndarray | None = None
        self.norm_mean_ = 0.0
        self.norm_std_ = 1.0

    def fit(self, real: np.ndarray) -> "SharedProjection":
        real = np.asarray(real, dtype=np.float64)
        if real.ndim != 2 or real.shape[0] < 2 or real.shape[1] < 2:
            raise DataError(f"PCA needs at least 2 rows and 2 features, got shape {real.shape}")
        if self.n_components > real.shape[1]:
            raise DataError(f"Cannot keep {self.n_components} components of {real.shape[1]} features")

        self.mean_ = real.mean(axis=0)
        scale = real.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        n_fit = min(self.n_components, real.shape[0])
        self.pca_ = PCA(n_components=n_fit, svd_solver="full").fit(self._standardize(real))

        variances = np.zeros(self.n_components)
        variances[:n_fit] = self.pca_.explained_variance_
        self.live_ = variances > DEGENERATE_VARIANCE * max(variances[0], 1.0)
        if not self.live_.all():
            logger.warning(f"Degenerate covariance: components {np.flatnonzero(~self.live_).tolist()} carry no variance and are set to zero")

        norms = np.linalg.norm(self._standardize(real), axis=1)
        self.norm_mean_ = float(norms.mean())
        self.norm_std_ = float(norms.std()) or 1.0
        return self

    def _standardize(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean_) / self.scale_

    def transform(self, rows: np.ndarray) -> np.ndarray:
        if self.pca_ is None:
            raise RuntimeError("SharedProjection.fit must be called before transform")
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(self.mean_):
            raise DataError(f"Expected rows of width {len(self.mean_)}, got shape {rows.shape}")
        projected = np.zeros((len(rows), self.n_components))
        if len(rows):
            fitted = self.pca_.transform(self._standardize(rows))
            projected[:, : fitted.shape[1]] = fitted
        projected[:, ~self.live_] = 0.0
        return projected

    def color(self, rows: np.ndarray) -> np.ndarray:
        """Norm of the standardized row, z-scored against the real rows' norms."""
        norms = np.linalg.norm(self._standardize(np.asarray(rows, dtype=np.float64)), axis=1)
        return (norms - self.norm_mean_) / self.norm_std_


def pca_project(datasets: dict[str, EncodedDataset], real_tag: str = "real", n_components: int = 2) -> pd.DataFrame:
    """Project every dataset onto the principal components of the real one.

    :param datasets: Tag -> dataset; must include `real_tag`
    :param real_tag: Dataset whose rows fit the basis
    :param n_components: Number of components kept
    :returns: DataFrame with columns dataset_tag, pc1..pcN, color
    """
    if real_tag not in datasets:
        raise DataError(f"No dataset tagged '{real_tag}' among {sorted(datasets)}")
    real = datasets[real_tag]
    for tag, dataset in datasets.items():
        if dataset.feature_names != real.feature_names:
            raise DataError(f"Dataset '{tag}' has a different feature layout than '{real_tag}'")

    projection = SharedProjection(n_components).fit(real.features)
    frames = []
    for tag, dataset in datasets.items():
        coords = projection.transform(dataset.features)
        frame = pd.DataFrame(coords, columns=[f"pc{i + 1}" for i in range(n_components)])
        frame.insert(0, "dataset_tag", tag)
        frame["color"] = projection.color(dataset.features) if dataset.n_rows else np.zeros(0)
        frames.append(frame)
    logger.info(f"Projected {len(datasets)} datasets onto {n_components} components fitted on '{real_tag}'")
    return pd.concat(frames, ignore_index=True)


def write_projection(table: pd.DataFrame, path: Path) -> None:
    table.to_csv(path, index=False, float_format="%.10g")
