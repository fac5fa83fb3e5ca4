from typing import Any, Literal

from pydantic import BaseModel, Field


class FileDigest(BaseModel):
    path: str
    sha256: str


class RunManifest(BaseModel):
    """Record of one CLI invocation, written to its output directory."""

    command: str = Field(..., description="Subcommand name")
    argv: list[str] = Field(default_factory=list, description="Raw command-line arguments")
    config: dict[str, Any] = Field(default_factory=dict, description="Fully resolved settings")
    seed: int
    tool_version: str
    inputs: list[FileDigest] = Field(default_factory=list)
    outputs: list[FileDigest] = Field(default_factory=list)
    duration_seconds: float = 0.0
    status: Literal["success", "failed"] = "success"
    failure: str | None = Field(None, description="Exception class and message of a failed run")
