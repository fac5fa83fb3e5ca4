import argparse
import json
import logging
import shutil
import sys
import time
from collections.abc import Callable
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from src.config import ABLATION_VARIANTS, Settings, TrainingConfig, get_settings
from src.exceptions import (
    CheckpointError,
    ClassifierError,
    ConfigError,
    DataError,
    FlowSynthException,
    MetricError,
    NumericAbortError,
    PlanError,
    ProtocolError,
)
from src.schemas.flows.models import AugmentedDataset, EncodedDataset, FeatureSchema, Provenance
from src.schemas.flows.plan import ScalePolicy
from src.schemas.manifest import RunManifest
from src.services.codec.container import read_encoded, write_encoded
from src.services.codec.pipeline import preprocess
from src.services.codec.plans import build_augmentation_plan
from src.services.codec.presets import PRESETS, get_preset
from src.services.codec.splits import binary_view
from src.services.codec.transform import FlowCodec
from src.services.evaluation.pca import pca_project, write_projection
from src.services.evaluation.protocol import run_loao, run_protocol
from src.services.evaluation.report import write_report
from src.services.gan.checkpoint import load_checkpoint
from src.services.gan.factory import make_gan_trainer
from src.services.gan.swd import sliced_wasserstein
from src.services.gan.trainer import CHECKPOINT_NAME, LOSS_LOG_NAME, GanTrainer
from src.services.ids.factory import make_classifier
from src.services.manifest import Stage, digest_paths, staged_output, write_manifest
from src.services.synthesis.synthesizer import assemble, export_raw, generate_class

logger = logging.getLogger(__name__)

SMOKE_EPOCHS = 200
METRICS_LOG_NAME = "metrics_log.csv"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# Commands write into the staging directory and return the input files they read
Command = Callable[[argparse.Namespace, Settings, Path], list[Path]]


def exit_code(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, NumericAbortError):
        return EXIT_NUMERIC
    if isinstance(error, (DataError, PlanError, CheckpointError, ProtocolError, ClassifierError, MetricError)):
        return EXIT_DATA
    return 1


def _require(*paths: Path | None) -> list[Path]:
    present = [p for p in paths if p is not None]
    missing = [str(p) for p in present if not p.exists()]
    if missing:
        raise DataError(f"Input file(s) not found: {', '.join(missing)}")
    return present


def resolve_settings(args: argparse.Namespace) -> Settings:
    """Defaults < config file < environment < command-line flags."""
    if args.config is not None and not args.config.exists():
        raise ConfigError(f"Config file not found: {args.config}")
    try:
        settings = get_settings(args.config)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot read config file {args.config}: {e}") from e
    update: dict = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.log_level is not None:
        update["log_level"] = args.log_level
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        update["ids"] = settings.ids.model_copy(update={"jobs": args.jobs})
    return settings.model_copy(update=update)


def training_config(args: argparse.Namespace, settings: Settings) -> TrainingConfig:
    """Apply --variant, the --no-* ablation flags, --smoke and --epochs to the configured GAN settings."""
    values = settings.gan.model_dump()
    if args.variant:
        use_ae, use_gate, use_attention = ABLATION_VARIANTS[args.variant]
        values.update(use_ae_constraint=use_ae, use_gate=use_gate, use_attention=use_attention)
    if args.no_ae:
        values["use_ae_constraint"] = False
    if args.no_gate:
        values["use_gate"] = False
    if args.no_attention:
        values["use_attention"] = False
    if args.smoke:
        values["epochs"] = SMOKE_EPOCHS
    if args.epochs is not None:
        values["epochs"] = args.epochs
    try:
        return TrainingConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"Invalid training configuration: {e}") from e


# -- commands -----------------------------------------------------------------


def cmd_preprocess(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    inputs = _require(args.data, args.test, args.schema)
    preset = get_preset(args.preset) if args.preset else None
    schema = FeatureSchema.from_file(args.schema) if args.schema else None
    result = preprocess(args.data, args.test, schema=schema, preset=preset, settings=settings)
    write_encoded(staging / "train.fse", result.train)
    write_encoded(staging / "test.fse", result.test)
    result.codec.save(staging / "codec.json")
    return inputs


def cmd_train_gan(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    inputs = _require(args.train, args.codec, args.resume)
    train = read_encoded(args.train)
    if args.resume:
        trainer = GanTrainer.resume(args.resume, epochs=args.epochs)
        if args.class_name != trainer.class_name:
            raise CheckpointError(f"Checkpoint was trained on '{trainer.class_name}', not '{args.class_name}'")
        earlier_log = args.resume.parent / LOSS_LOG_NAME
        if earlier_log.exists():
            shutil.copy(earlier_log, staging / LOSS_LOG_NAME)
    else:
        codec = FlowCodec.load(args.codec)
        trainer = make_gan_trainer(codec, args.class_name, settings=settings, config=training_config(args, settings))
    if args.class_name not in train.class_names:
        raise DataError(f"Class '{args.class_name}' not in {train.class_names}")
    rows = train.rows_of(args.class_name)
    real = rows.subset(rows.provenance == Provenance.REAL.value)
    trainer.train(real, staging)
    return inputs


def cmd_generate(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    if args.n < 0:
        raise ConfigError(f"--n must be >= 0, got {args.n}")
    inputs = _require(args.checkpoint, args.codec)
    codec = FlowCodec.load(args.codec) if args.codec else None
    meta = load_checkpoint(args.checkpoint).meta
    rows = generate_class(args.checkpoint, args.n, settings.seed, codec=codec)
    class_names = codec.class_names if codec else [meta.class_name or "synthetic"]
    label = class_names.index(meta.class_name) if meta.class_name in class_names else 0
    dataset = AugmentedDataset(
        features=rows,
        labels=np.full(len(rows), label, dtype=np.int64),
        class_names=class_names,
        feature_names=meta.feature_names,
        provenance=np.full(len(rows), Provenance.SYNTHETIC.value, dtype=np.uint8),
        split_tag="train",
    )
    write_encoded(staging / "synthetic.fse", dataset)
    if codec is not None:
        export_raw(dataset, codec, staging / "synthetic.csv")
    return inputs


def _plan_policy(args: argparse.Namespace) -> str | dict[str, int] | ScalePolicy:
    if args.plan == "scaled":
        if not args.classes:
            raise ConfigError("--plan scaled needs --classes")
        try:
            return ScalePolicy(factor=args.factor, cap=args.cap, classes=args.classes)
        except ValidationError as e:
            raise ConfigError(f"Invalid scaled plan: {e}") from e
    if args.plan in PRESETS:
        return args.plan
    path = Path(args.plan)
    if not path.exists():
        raise ConfigError(f"--plan must be a preset ({sorted(PRESETS)}), 'scaled' or a JSON file of targets, got '{args.plan}'")
    try:
        return {str(k): int(v) for k, v in json.loads(path.read_text(encoding="utf-8")).items()}
    except (ValueError, AttributeError) as e:
        raise ConfigError(f"Cannot read plan file {path}: {e}") from e


def _checkpoint_map(args: argparse.Namespace) -> dict[str, Path]:
    checkpoints: dict[str, Path] = {}
    if args.checkpoints_dir:
        for path in sorted(args.checkpoints_dir.glob(f"*/{CHECKPOINT_NAME}")):
            checkpoints[path.parent.name] = path
    for item in args.checkpoint or []:
        name, _, path = item.partition("=")
        if not path:
            raise ConfigError(f"--checkpoint expects CLASS=PATH, got '{item}'")
        checkpoints[name] = Path(path)
    return checkpoints


def cmd_augment(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    checkpoints = _checkpoint_map(args)
    inputs = _require(args.train, args.codec, *checkpoints.values())
    train = read_encoded(args.train)
    codec = FlowCodec.load(args.codec) if args.codec else None
    plan = build_augmentation_plan(train.class_counts(), _plan_policy(args))
    augmented = assemble(train, plan, checkpoints, settings.seed, codec=codec, jobs=settings.ids.jobs)
    write_encoded(staging / "augmented.fse", augmented)
    (staging / "plan.json").write_text(plan.model_dump_json(indent=2), encoding="utf-8")
    if args.export_raw:
        if codec is None:
            raise ConfigError("--export-raw needs --codec")
        export_raw(augmented, codec, staging / "augmented.csv")
    return inputs


def _normal_class(args: argparse.Namespace) -> str:
    if args.normal_class:
        return args.normal_class
    return get_preset(args.preset).normal_class if args.preset else "Normal"


def cmd_train_ids(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    inputs = _require(args.train)
    train: EncodedDataset = read_encoded(args.train)
    if args.task == "binary":
        train = binary_view(train, _normal_class(args))
    classifier = make_classifier(args.kind, train.n_features, len(train.class_names), settings.seed, settings=settings)
    classifier.fit(train, epochs=args.epochs)
    classifier.save(staging / "classifier.idsc")
    classifier.write_history(staging / METRICS_LOG_NAME)
    return inputs


def _conditions(args: argparse.Namespace) -> tuple[dict[str, EncodedDataset], list[Path]]:
    inputs = _require(args.train, args.augmented, args.test)
    conditions: dict[str, EncodedDataset] = {"original": read_encoded(args.train)}
    if args.augmented:
        conditions["augmented"] = read_encoded(args.augmented)
    return conditions, inputs


def cmd_eval(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    conditions, inputs = _conditions(args)
    report = run_protocol(
        args.dataset,
        conditions,
        read_encoded(args.test),
        task=args.task,
        normal_class=_normal_class(args),
        kinds=args.kinds,
        n_runs=args.runs,
        settings=settings,
    )
    write_report(report, staging)
    return inputs


def cmd_loao(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    conditions, inputs = _conditions(args)
    report = run_loao(
        args.dataset,
        conditions,
        read_encoded(args.test),
        unknown_class=args.unknown,
        normal_class=_normal_class(args),
        kinds=args.kinds,
        n_runs=args.runs,
        negatives=args.negatives,
        settings=settings,
    )
    write_report(report, staging)
    return inputs


def _class_suffix(args: argparse.Namespace) -> str:
    return f" of class '{args.class_name}'" if args.class_name else ""


def cmd_swd(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    inputs = _require(args.real, args.fake)
    real, fake = read_encoded(args.real), read_encoded(args.fake)
    if args.class_name:
        real, fake = real.rows_of(args.class_name), fake.rows_of(args.class_name)
    empty = [str(path) for path, d in ((args.real, real), (args.fake, fake)) if d.n_rows == 0]
    if empty:
        raise DataError(f"No rows{_class_suffix(args)} in {', '.join(empty)}")
    projections = args.projections or settings.gan.swd_projections
    value = sliced_wasserstein(real.features, fake.features, projections, settings.seed)
    payload = {"swd": value, "projections": projections, "seed": settings.seed, "real_rows": real.n_rows, "fake_rows": fake.n_rows}
    (staging / "swd.json").write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"SWD = {value:.6f} over {projections} projections")
    return inputs


def cmd_pca(args: argparse.Namespace, settings: Settings, staging: Path) -> list[Path]:
    tagged = {"real": args.real}
    for item in args.synthetic or []:
        tag, _, path = item.partition("=")
        if not path:
            raise ConfigError(f"--synthetic expects TAG=PATH, got '{item}'")
        tagged[tag] = Path(path)
    inputs = _require(*tagged.values())
    datasets: dict[str, EncodedDataset] = {tag: read_encoded(path) for tag, path in tagged.items()}
    if args.class_name:
        datasets = {tag: d.rows_of(args.class_name) for tag, d in datasets.items()}
    empty = sorted(tag for tag, d in datasets.items() if d.n_rows == 0)
    if empty:
        raise DataError(f"No rows{_class_suffix(args)} in dataset(s) {empty}")
    table = pca_project(datasets, real_tag="real", n_components=settings.eval.pca_components)
    write_projection(table, staging / "projection.csv")
    return inputs


COMMANDS: dict[str, Command] = {
    "preprocess": cmd_preprocess,
    "train-gan": cmd_train_gan,
    "generate": cmd_generate,
    "augment": cmd_augment,
    "train-ids": cmd_train_ids,
    "eval": cmd_eval,
    "loao": cmd_loao,
    "swd": cmd_swd,
    "pca": cmd_pca,
}


# -- parser -------------------------------------------------------------------


def _add_eval_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--train", type=Path, required=True, help="Original training container")
    parser.add_argument("--augmented", type=Path, help="Augmented training container, evaluated as a second condition")
    parser.add_argument("--test", type=Path, required=True)
    parser.add_argument("--dataset", default="dataset", help="Dataset name echoed in the report")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="Takes the normal class from a dataset preset")
    parser.add_argument("--normal-class")
    parser.add_argument("--kinds", nargs="+", help="IDS kinds, default from settings")
    parser.add_argument("--runs", type=int, help="Runs per kind and condition, default from settings")
    parser.add_argument("--out", type=Path, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowsynth", description="Class-conditional flow synthesis for IDS data augmentation")
    parser.add_argument("--config", type=Path, help="TOML config file")
    parser.add_argument("--seed", type=int, help="Overrides the configured seed")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--jobs", type=int, help="Worker processes for independent jobs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="Encode train/test flow tables")
    p.add_argument("--data", type=Path, required=True, help="Training flow table, or the only table of holdout datasets")
    p.add_argument("--test", type=Path, help="Official test flow table")
    p.add_argument("--schema", type=Path, help="TOML feature schema")
    p.add_argument("--dataset-preset", dest="preset", choices=sorted(PRESETS))
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train-gan", help="Train one per-class generator")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--codec", type=Path, required=True)
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--variant", choices=sorted(ABLATION_VARIANTS))
    p.add_argument("--no-ae", action="store_true", help="Disable the autoencoder constraint")
    p.add_argument("--no-gate", action="store_true", help="Fix the loss weights at 0.5/0.5")
    p.add_argument("--no-attention", action="store_true", help="Remove feature self-attention")
    p.add_argument("--smoke", action="store_true", help=f"Short run of {SMOKE_EPOCHS} epochs")
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", type=Path, help="Checkpoint to continue from")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("generate", help="Sample rows from a generator checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--codec", type=Path, help="Verifies the layout and also writes decoded rows")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("augment", help="Merge real and synthetic rows per a plan")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--codec", type=Path)
    p.add_argument("--plan", required=True, help="Preset name, 'scaled', or a JSON file of class -> target count")
    p.add_argument("--classes", nargs="+", help="Classes grown by --plan scaled")
    p.add_argument("--factor", type=float, default=5.0)
    p.add_argument("--cap", type=int)
    p.add_argument("--checkpoints-dir", type=Path, help=f"Directory of <class>/{CHECKPOINT_NAME}")
    p.add_argument("--checkpoint", action="append", help="CLASS=PATH, repeatable")
    p.add_argument("--export-raw", action="store_true")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train-ids", help="Train one IDS classifier")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--task", choices=["binary", "multi"], default="multi")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--normal-class")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="Repeated-run classification protocol")
    _add_eval_args(p)
    p.add_argument("--task", choices=["binary", "multi"], default="multi")

    p = sub.add_parser("loao", help="Leave-one-attack-type-out protocol")
    _add_eval_args(p)
    p.add_argument("--unknown", required=True, help="Attack class removed from training")
    p.add_argument("--negatives", choices=["normal", "all"])

    p = sub.add_parser("swd", help="Sliced Wasserstein distance between two containers")
    p.add_argument("--real", type=Path, required=True)
    p.add_argument("--fake", type=Path, required=True)
    p.add_argument("--class", dest="class_name")
    p.add_argument("--projections", type=int)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("pca", help="Shared-basis PCA projection export")
    p.add_argument("--real", type=Path, required=True)
    p.add_argument("--synthetic", action="append", help="TAG=PATH, repeatable")
    p.add_argument("--class", dest="class_name")
    p.add_argument("--out", type=Path, required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    started = time.monotonic()
    out_dir: Path = args.out
    settings: Settings | None = None
    inputs: list[Path] = []
    stage: Stage | None = None
    # an aborted generator run keeps its last good checkpoint and loss log
    keep_on: tuple[type[BaseException], ...] = (NumericAbortError,) if args.command == "train-gan" else ()
    try:
        settings = resolve_settings(args)
        logging.basicConfig(level=settings.log_level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        logger.info(f"flowsynth {settings.app_version} {args.command} (seed {settings.seed})")
        with staged_output(out_dir, keep_on=keep_on) as stage:
            inputs = COMMANDS[args.command](args, settings, stage.path)
        outputs = stage.promoted
        status, failure, code = "success", None, EXIT_OK
    except FlowSynthException as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        outputs = stage.promoted if stage else []
        status, failure, code = "failed", f"{type(e).__name__}: {e}", exit_code(e)
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        outputs = stage.promoted if stage else []
        status, failure, code = "failed", f"{type(e).__name__}: {e}", exit_code(e)

    manifest = RunManifest(
        command=args.command,
        argv=argv,
        config=settings.model_dump(mode="json") if settings else {},
        seed=settings.seed if settings else 0,
        tool_version=settings.app_version if settings else "unknown",
        inputs=digest_paths(inputs),
        outputs=digest_paths(outputs),
        duration_seconds=round(time.monotonic() - started, 3),
        status=status,
        failure=failure,
    )
    write_manifest(out_dir, manifest)
    if code == EXIT_OK:
        logger.info(f"{args.command} wrote {len(outputs)} artifact(s) to {out_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
