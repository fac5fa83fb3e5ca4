import hashlib
import logging
import shutil
import tempfile
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from src.schemas.manifest import FileDigest, RunManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def sha256_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def digest_paths(paths: list[Path]) -> list[FileDigest]:
    """Digest files, expanding directories into their sorted files."""
    digests = []
    for path in paths:
        files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        digests.extend(FileDigest(path=str(p), sha256=sha256_file(p)) for p in files)
    return digests


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return path


@dataclass
class Stage:
    """Staging directory of one command and the artifacts it moved into the output directory."""

    path: Path
    promoted: list[Path] = field(default_factory=list)


def _promote(staging: Path, out_dir: Path) -> list[Path]:
    promoted = []
    for item in sorted(staging.iterdir()):
        target = out_dir / item.name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        shutil.move(str(item), str(target))
        promoted.append(target)
    return promoted


@contextmanager
def staged_output(out_dir: Path, keep_on: tuple[type[BaseException], ...] = ()) -> Iterator[Stage]:
    """Yield a staging area whose files move into `out_dir` only if the block succeeds.

    :param keep_on: Exception types whose partial artifacts are promoted before the error propagates
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Stage(path=Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir)))
    try:
        yield stage
        stage.promoted = _promote(stage.path, out_dir)
    except keep_on:
        stage.promoted = _promote(stage.path, out_dir)
        logger.warning(f"Kept {len(stage.promoted)} partial artifact(s) in {out_dir}")
        raise
    finally:
        shutil.rmtree(stage.path, ignore_errors=True)
