from pathlib import Path
from typing import Any, Literal

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict, TomlConfigSettingsSource

PROJECT_ROOT_PATH = Path(__file__).parent.parent
ENV_FILE_PATH = PROJECT_ROOT_PATH / ".env"

IDS_KINDS = ("cnn", "dnn", "lstm", "cnn_bilstm", "cnn_lstm")

# Ablation variants: (use_ae_constraint, use_gate, use_attention)
ABLATION_VARIANTS: dict[str, tuple[bool, bool, bool]] = {
    "g-wgan-gp": (False, False, False),
    "ga-wgan-gp": (True, False, False),
    "gma-wgan-gp": (True, True, False),
    "gma-sawgan-gp": (True, True, True),
}


class BaseConfigSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=[".env", str(ENV_FILE_PATH)],
        extra="ignore",
        frozen=True,
        env_nested_delimiter="__",
        case_sensitive=False,
    )


class CodecSettings(BaseConfigSettings):
    model_config = SettingsConfigDict(
        env_file=[".env", str(ENV_FILE_PATH)],
        env_prefix="CODEC__",
        extra="ignore",
        frozen=True,
        case_sensitive=False,
    )
    # Flow table parsing
    delimiter: str = ","
    encoding: str = "utf-8"
    non_finite: Literal["error", "drop"] = "error"
    # Encoded range tolerance
    numeric_tolerance: float = 1e-9
    oov_token: str = "<oov>"
    # Holdout split for datasets without an official test file
    holdout_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    split_seed: int = 42


class TrainingConfig(BaseConfigSettings):
    model_config = SettingsConfigDict(
        env_file=[".env", str(ENV_FILE_PATH)],
        env_prefix="GAN__",
        extra="ignore",
        frozen=True,
        case_sensitive=False,
    )
    # Adversarial objective
    gp_weight: float = Field(10.0, ge=0.0)
    critic_steps: int = Field(5, ge=1)
    batch_size: int = Field(128, ge=2)
    lr_critic: float = Field(1e-4, gt=0.0)
    lr_generator: float = Field(1e-4, gt=0.0)
    lr_autoencoder: float = Field(1e-3, gt=0.0)
    # Gate
    entropy_weight: float = Field(0.1, ge=0.0)
    gate_clip_low: float = Field(0.0, ge=0.0, le=1.0)
    gate_clip_high: float = Field(1.0, ge=0.0, le=1.0)
    # Schedule
    epochs: int = Field(5000, ge=1)
    tau_start: float = Field(1.0, gt=0.0)
    tau_end: float = Field(0.1, gt=0.0)
    tau_anneal_fraction: float = Field(0.8, gt=0.0, le=1.0)
    # Architecture widths
    z_dim: int = Field(64, ge=1)
    d_model: int = Field(32, ge=1)
    d_key: int = Field(32, ge=1)
    generator_hidden: tuple[int, ...] = (256, 256)
    critic_hidden: tuple[int, ...] = (256, 256, 256)
    ae_hidden: int = Field(128, ge=1)
    ae_bottleneck: int | None = None
    gate_hidden: int = Field(16, ge=1)
    leaky_slope: float = 0.2
    # Ablation toggles
    use_ae_constraint: bool = True
    use_gate: bool = True
    use_attention: bool = True
    # Monitoring and persistence
    swd_projections: int = Field(128, ge=1)
    swd_samples: int = Field(512, ge=2)
    swd_every: int = Field(1, ge=1)
    checkpoint_every: int = Field(100, ge=1)
    log_every: int = Field(50, ge=1)
    dtype: Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def _check_clip_bounds(self) -> "TrainingConfig":
        if self.gate_clip_low > self.gate_clip_high:
            raise ValueError(f"gate clip bounds must satisfy a <= b, got [{self.gate_clip_low}, {self.gate_clip_high}]")
        return self

    def with_variant(self, variant: str) -> "TrainingConfig":
        """Return a copy with the toggles of a named ablation variant."""
        if variant not in ABLATION_VARIANTS:
            raise ValueError(f"Unknown ablation variant '{variant}', expected one of {sorted(ABLATION_VARIANTS)}")
        use_ae, use_gate, use_attention = ABLATION_VARIANTS[variant]
        return self.model_copy(update={"use_ae_constraint": use_ae, "use_gate": use_gate, "use_attention": use_attention})


class IdsSettings(BaseConfigSettings):
    model_config = SettingsConfigDict(
        env_file=[".env", str(ENV_FILE_PATH)],
        env_prefix="IDS__",
        extra="ignore",
        frozen=True,
        case_sensitive=False,
    )

    epochs: int = Field(100, ge=0)
    batch_size: int = Field(256, ge=1)
    learning_rate: float = Field(1e-3, gt=0.0)
    n_runs: int = Field(20, ge=1)
    kinds: tuple[str, ...] = IDS_KINDS
    jobs: int = Field(1, ge=1)


class EvalSettings(BaseConfigSettings):
    model_config = SettingsConfigDict(
        env_file=[".env", str(ENV_FILE_PATH)],
        env_prefix="EVAL__",
        extra="ignore",
        frozen=True,
        case_sensitive=False,
    )

    target_fpr: float = Field(0.05, gt=0.0, lt=1.0)
    loao_negatives: Literal["normal", "all"] = "normal"
    pca_components: int = Field(2, ge=1)


class Settings(BaseConfigSettings):
    model_config = SettingsConfigDict(
        env_file=[".env", str(ENV_FILE_PATH)],
        env_prefix="FLOWSYNTH_",
        extra="ignore",
        frozen=True,
        env_nested_delimiter="__",
        case_sensitive=False,
    )

    app_version: str = "0.1.0"
    seed: int = 0
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    codec: CodecSettings = Field(default_factory=CodecSettings)
    gan: TrainingConfig = Field(default_factory=TrainingConfig)
    ids: IdsSettings = Field(default_factory=IdsSettings)
    eval: EvalSettings = Field(default_factory=EvalSettings)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # CLI flags > environment > .env > TOML config file > defaults
        return (init_settings, env_settings, dotenv_settings, TomlConfigSettingsSource(settings_cls), file_secret_settings)


def get_settings(config_file: Path | None = None, **overrides: Any) -> Settings:
    """Resolve settings from defaults, an optional TOML file, the environment and explicit overrides.

    :param config_file: Optional TOML file with top-level keys and [codec]/[gan]/[ids]/[eval] tables
    :param overrides: Highest-precedence values, nested sections given as dicts
    :returns: Frozen Settings instance
    """
    if config_file is None:
        return Settings(**overrides)

    class FileSettings(Settings):
        model_config = SettingsConfigDict(toml_file=str(config_file))

    # plain Settings so the result pickles into worker processes
    return Settings(**FileSettings(**overrides).model_dump())
