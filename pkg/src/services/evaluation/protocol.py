import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.config import Settings, get_settings
from src.exceptions import NumericAbortError, ProtocolError
from src.schemas.evaluation.models import EvalReport, IdsKind, RunResult
from src.schemas.flows.models import EncodedDataset
from src.services.codec.splits import binary_view, make_loao_split
from src.services.gan.rng import substream_seed
from src.services.ids.factory import make_classifier
from src.services.manifest import sha256_bytes

from .metrics import class_metrics, macro_f1, one_vs_rest_counts, overall_accuracy, roc_auroc, tpr_at_fpr
from .report import summarize

logger = logging.getLogger(__name__)

Task = Literal["binary", "multi"]


def run_seed(base_seed: int, run: int) -> int:
    """Seed of run `run`; shared by every kind and condition so conditions are paired."""
    return substream_seed(base_seed, f"ids/run/{run}")


def dataset_digest(dataset: EncodedDataset) -> str:
    return sha256_bytes(np.ascontiguousarray(dataset.features).tobytes() + np.ascontiguousarray(dataset.labels).tobytes())


def anomaly_scores(probabilities: np.ndarray, normal_index: int) -> np.ndarray:
    """s(x) = 1 - P(Normal | x)."""
    return 1.0 - probabilities[:, normal_index]


@dataclass(frozen=True)
class RunJob:
    dataset: str
    kind: IdsKind
    condition: str
    seed: int
    train: EncodedDataset
    test: EncodedDataset
    mode: Literal["binary", "multi", "loao"]
    normal_class: str
    settings: Settings
    unknown_class: str | None = None
    negatives: Literal["normal", "all"] = "normal"


def _failed(job: RunJob, error: Exception) -> RunResult:
    logger.warning(f"Run {job.kind.value}/{job.condition}/seed {job.seed} failed: {error}")
    return RunResult(dataset=job.dataset, kind=job.kind, condition=job.condition, seed=job.seed, status="failed", error=str(error))


def _classification_run(job: RunJob) -> RunResult:
    train, test = job.train, job.test
    if job.mode == "binary":
        train, test = binary_view(train, job.normal_class), binary_view(test, job.normal_class)
    if train.class_names != test.class_names:
        raise ProtocolError(f"Train classes {train.class_names} differ from test classes {test.class_names}")

    classifier = make_classifier(job.kind, train.n_features, len(train.class_names), job.seed, settings=job.settings)
    try:
        classifier.fit(train)
    except NumericAbortError as e:
        return _failed(job, e)

    probabilities = classifier.predict_scores(test.features)
    predicted = probabilities.argmax(axis=1)
    result = RunResult(
        dataset=job.dataset,
        kind=job.kind,
        condition=job.condition,
        seed=job.seed,
        accuracy=overall_accuracy(test.labels, predicted),
        macro_f1=macro_f1(one_vs_rest_counts(test.labels, predicted, len(test.class_names))),
        per_class=class_metrics(test.labels, predicted, test.class_names),
    )
    normal_class = "Normal" if job.mode == "binary" else job.normal_class
    if normal_class in test.class_names:
        positives = (test.labels != test.class_index(normal_class)).astype(np.int64)
        if 0 < positives.sum() < len(positives):
            curve, auroc = roc_auroc(anomaly_scores(probabilities, test.class_index(normal_class)), positives)
            result.auroc = auroc
            result.tpr_at_fpr = tpr_at_fpr(curve, job.settings.eval.target_fpr)
    logger.info(f"{job.dataset} {job.kind.value}/{job.condition} seed {job.seed}: acc={result.accuracy:.4f} macro-F1={result.macro_f1:.4f}")
    return result


def _loao_run(job: RunJob) -> RunResult:
    train, test = make_loao_split(job.train, job.test, job.unknown_class, job.normal_class)
    if job.unknown_class in train.class_names or (train.n_rows and train.labels.max() >= len(train.class_names)):
        raise ProtocolError(f"Unknown class '{job.unknown_class}' leaked into the training split")

    classifier = make_classifier(job.kind, train.n_features, len(train.class_names), job.seed, settings=job.settings)
    try:
        classifier.fit(train)
    except NumericAbortError as e:
        return _failed(job, e)

    scores = anomaly_scores(classifier.predict_scores(test.features), train.class_index(job.normal_class))
    unknown = test.labels == test.class_index(job.unknown_class)
    if job.negatives == "normal":
        population = unknown | (test.labels == test.class_index(job.normal_class))
    else:
        population = np.ones(test.n_rows, dtype=bool)
    curve, auroc = roc_auroc(scores[population], unknown[population].astype(np.int64))
    result = RunResult(
        dataset=job.dataset,
        kind=job.kind,
        condition=job.condition,
        seed=job.seed,
        auroc=auroc,
        tpr_at_fpr=tpr_at_fpr(curve, job.settings.eval.target_fpr),
    )
    logger.info(f"{job.dataset} LOAO '{job.unknown_class}' {job.kind.value}/{job.condition} seed {job.seed}: AUROC={auroc:.4f}")
    return result


def execute(job: RunJob) -> RunResult:
    if job.mode == "loao":
        return _loao_run(job)
    return _classification_run(job)


def _run_all(jobs: list[RunJob], workers: int) -> list[RunResult]:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute, jobs))
    else:
        results = [execute(job) for job in jobs]
    return sorted(results, key=lambda r: (r.dataset, r.kind.value, r.condition, r.seed))


def _resolve_kinds(kinds: list[str] | None, settings: Settings) -> list[IdsKind]:
    try:
        return [IdsKind(kind) for kind in (kinds or settings.ids.kinds)]
    except ValueError as e:
        raise ProtocolError(f"Unknown IDS kind in {kinds}: {e}") from e


def _check_conditions(conditions: dict[str, EncodedDataset], test: EncodedDataset) -> None:
    if not conditions:
        raise ProtocolError("At least one training condition is required")
    for name, train in conditions.items():
        if train.feature_names != test.feature_names:
            raise ProtocolError(f"Condition '{name}' does not share the test split's feature schema")
        if train.class_names != test.class_names:
            raise ProtocolError(f"Condition '{name}' classes {train.class_names} differ from test classes {test.class_names}")


def run_protocol(
    dataset: str,
    conditions: dict[str, EncodedDataset],
    test: EncodedDataset,
    task: Task,
    normal_class: str,
    kinds: list[str] | None = None,
    n_runs: int | None = None,
    settings: Settings | None = None,
) -> EvalReport:
    """Train every kind `n_runs` times per training condition and score the fixed test split.

    :param dataset: Dataset name echoed in the report
    :param conditions: Condition name (e.g. original, augmented) -> training split
    :param test: Test split sharing the training schema
    :param task: binary collapses all attacks into Abnormal; multi keeps every class
    :param normal_class: Benign class name
    :param kinds: IDS kinds, defaults to settings.ids.kinds
    :param n_runs: Independent seeds per kind, defaults to settings.ids.n_runs
    :param settings: Optional Settings instance
    :returns: EvalReport with per-run values and mean/std summaries
    """
    if settings is None:
        settings = get_settings()
    if task not in ("binary", "multi"):
        raise ProtocolError(f"Unknown task '{task}', expected binary or multi")
    _check_conditions(conditions, test)
    n_runs = n_runs or settings.ids.n_runs
    seeds = [run_seed(settings.seed, r) for r in range(n_runs)]
    jobs = [
        RunJob(dataset, kind, condition, seed, train, test, task, normal_class, settings)
        for kind in _resolve_kinds(kinds, settings)
        for condition, train in conditions.items()
        for seed in seeds
    ]
    logger.info(f"Running {len(jobs)} {task} classification runs on {dataset}")
    runs = _run_all(jobs, settings.ids.jobs)
    class_names = binary_view(test, normal_class).class_names if task == "binary" else test.class_names
    return EvalReport(
        experiment=task,
        dataset=dataset,
        class_names=class_names,
        target_fpr=settings.eval.target_fpr,
        config={**settings.model_dump(mode="json"), "test_sha256": dataset_digest(test)},
        runs=runs,
        summaries=summarize(runs),
    )


def run_loao(
    dataset: str,
    conditions: dict[str, EncodedDataset],
    test: EncodedDataset,
    unknown_class: str,
    normal_class: str,
    kinds: list[str] | None = None,
    n_runs: int | None = None,
    negatives: Literal["normal", "all"] | None = None,
    settings: Settings | None = None,
) -> EvalReport:
    """Leave one attack type out of training and measure how well 1 - P(Normal) ranks it on the fixed test split.

    Positives are the unknown class's test rows. Negatives are the Normal test rows, or every other
    test row when `negatives` is "all".
    """
    if settings is None:
        settings = get_settings()
    negatives = negatives or settings.eval.loao_negatives
    _check_conditions(conditions, test)
    for train in conditions.values():
        # fail fast before any job is scheduled
        make_loao_split(train, test, unknown_class, normal_class)
    test_digest = dataset_digest(test)
    n_runs = n_runs or settings.ids.n_runs
    seeds = [run_seed(settings.seed, r) for r in range(n_runs)]
    jobs = [
        RunJob(dataset, kind, condition, seed, train, test, "loao", normal_class, settings, unknown_class, negatives)
        for kind in _resolve_kinds(kinds, settings)
        for condition, train in conditions.items()
        for seed in seeds
    ]
    logger.info(f"Running {len(jobs)} LOAO runs on {dataset} with '{unknown_class}' unknown ({negatives} negatives)")
    runs = _run_all(jobs, settings.ids.jobs)
    if dataset_digest(test) != test_digest:
        raise ProtocolError("The LOAO test split changed during the protocol")
    return EvalReport(
        experiment="loao",
        dataset=dataset,
        class_names=test.class_names,
        unknown_class=unknown_class,
        target_fpr=settings.eval.target_fpr,
        config={**settings.model_dump(mode="json"), "test_sha256": test_digest, "loao_negatives": negatives},
        runs=runs,
        summaries=summarize(runs),
    )
