from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from src.exceptions import ConfigError
from src.schemas.flows.models import FeatureSchema, FieldKind, FieldRole, FieldSpec

NSL_KDD_COLUMNS = [
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
    "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
    "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
    "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
    "label", "difficulty",
]  # fmt: skip

UNSW_NB15_FEATURES = [
    "dur", "proto", "service", "state", "spkts", "dpkts", "sbytes", "dbytes", "rate",
    "sttl", "dttl", "sload", "dload", "sloss", "dloss", "sinpkt", "dinpkt", "sjit", "djit",
    "swin", "stcpb", "dtcpb", "dwin", "tcprtt", "synack", "ackdat", "smean", "dmean",
    "trans_depth", "response_body_len", "ct_srv_src", "ct_state_ttl", "ct_dst_ltm",
    "ct_src_dport_ltm", "ct_dst_sport_ltm", "ct_dst_src_ltm", "is_ftp_login", "ct_ftp_cmd",
    "ct_flw_http_mthd", "ct_src_ltm", "ct_srv_dst", "is_sm_ips_ports",
]  # fmt: skip

NSL_KDD_ATTACK_FAMILIES = {
    "DoS": ["back", "land", "neptune", "pod", "smurf", "teardrop", "apache2", "mailbomb", "processtable", "udpstorm"],
    "Probe": ["ipsweep", "nmap", "portsweep", "satan", "mscan", "saint"],
    "R2L": [
        "ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy", "warezclient", "warezmaster",
        "sendmail", "named", "snmpgetattack", "snmpguess", "xlock", "xsnoop", "worm",
    ],
    "U2R": ["buffer_overflow", "loadmodule", "perl", "rootkit", "httptunnel", "ps", "sqlattack", "xterm"],
}  # fmt: skip

CICIDS2017_FAMILIES = {
    "Benign": ["benign"],
    "DoS": ["dos hulk", "dos goldeneye", "dos slowloris", "dos slowhttptest", "ddos"],
    "PortScan": ["portscan"],
    "BruteForce": ["ftp-patator", "ssh-patator"],
    "WebAttack": [
        "web attack – brute force", "web attack – xss", "web attack – sql injection",
        "web attack - brute force", "web attack - xss", "web attack - sql injection",
        "web attack � brute force", "web attack � xss", "web attack � sql injection",
    ],
    "Bot": ["bot"],
}  # fmt: skip


def normalize_label(raw: str) -> str:
    """Collapse internal whitespace and casefold a raw label."""
    return " ".join(raw.split()).casefold()


def _invert(families: dict[str, list[str]]) -> dict[str, str]:
    return {normalize_label(raw): family for family, raws in families.items() for raw in raws}


class DatasetPreset(BaseModel):
    """Per-dataset preprocessing rules and the augmentation counts of the reference experiments."""

    model_config = ConfigDict(frozen=True)

    name: str
    schema_: FeatureSchema | None = Field(None, alias="schema", description="Bundled schema, None when the user must supply one")
    normal_class: str
    class_order: list[str] = Field(..., description="Class index order of the encoded datasets")
    label_map: dict[str, str] = Field(default_factory=dict, description="Normalized raw label -> class name")
    split_rule: Literal["official", "holdout"] = "official"
    non_finite: Literal["error", "drop"] = "error"
    plan: dict[str, tuple[int, int]] = Field(default_factory=dict, description="Class -> (original, target) training counts")
    unknown_classes: list[str] = Field(default_factory=list, description="Attack classes held out in generalization tests")


def _nsl_kdd_schema() -> FeatureSchema:
    discrete = {"protocol_type", "service", "flag"}
    fields = [
        FieldSpec(name=name, kind=FieldKind.DISCRETE if name in discrete else FieldKind.CONTINUOUS)
        for name in NSL_KDD_COLUMNS
        if name not in ("label", "difficulty")
    ]
    fields.append(FieldSpec(name="label", kind=FieldKind.DISCRETE, role=FieldRole.LABEL))
    return FeatureSchema(name="nsl-kdd", fields=fields, columns=NSL_KDD_COLUMNS)


def _unsw_nb15_schema() -> FeatureSchema:
    discrete = {"proto", "service", "state"}
    fields = [FieldSpec(name=name, kind=FieldKind.DISCRETE if name in discrete else FieldKind.CONTINUOUS) for name in UNSW_NB15_FEATURES]
    fields.append(FieldSpec(name="attack_cat", kind=FieldKind.DISCRETE, role=FieldRole.LABEL))
    return FeatureSchema(name="unsw-nb15", fields=fields)


def _build_presets() -> dict[str, DatasetPreset]:
    nsl_map = {"normal": "Normal", **_invert(NSL_KDD_ATTACK_FAMILIES)}
    unsw_classes = ["Normal", "DoS", "Reconnaissance", "Shellcode", "Worms"]
    cicids_classes = ["Benign", "DoS", "PortScan", "BruteForce", "WebAttack", "Bot"]
    return {
        "nsl-kdd": DatasetPreset(
            name="nsl-kdd",
            schema=_nsl_kdd_schema(),
            normal_class="Normal",
            class_order=["Normal", "R2L", "Probe", "DoS", "U2R"],
            label_map=nsl_map,
            plan={"Normal": (67343, 67343), "R2L": (995, 10995), "Probe": (11656, 21656), "DoS": (45927, 45927), "U2R": (52, 10052)},
            unknown_classes=["Probe", "R2L"],
        ),
        "unsw-nb15": DatasetPreset(
            name="unsw-nb15",
            schema=_unsw_nb15_schema(),
            normal_class="Normal",
            class_order=unsw_classes,
            label_map={normalize_label(c): c for c in unsw_classes},
            plan={
                "Normal": (56000, 56000),
                "DoS": (12264, 22264),
                "Reconnaissance": (10491, 20491),
                "Shellcode": (1133, 11133),
                "Worms": (130, 10130),
            },
            unknown_classes=["DoS", "Reconnaissance"],
        ),
        "cicids2017": DatasetPreset(
            name="cicids2017",
            schema=None,
            normal_class="Benign",
            class_order=cicids_classes,
            label_map=_invert(CICIDS2017_FAMILIES),
            split_rule="holdout",
            non_finite="drop",
            plan={
                "Benign": (105222, 105222),
                "DoS": (21550, 34609),
                "PortScan": (10809, 23868),
                "BruteForce": (5235, 18294),
                "WebAttack": (1476, 14535),
                "Bot": (857, 13916),
            },
            unknown_classes=["DoS", "PortScan"],
        ),
    }


PRESETS = _build_presets()


def get_preset(name: str) -> DatasetPreset:
    """Look up a dataset preset by name.

    :param name: One of nsl-kdd, unsw-nb15, cicids2017
    :returns: DatasetPreset
    """
    try:
        return PRESETS[name]
    except KeyError as e:
        raise ConfigError(f"Unknown dataset preset '{name}', expected one of {sorted(PRESETS)}") from e


def resolve_schema(preset: DatasetPreset | None, schema: FeatureSchema | None) -> FeatureSchema:
    """Pick the schema for a preprocessing run; a user schema overrides the preset's but must keep its label field."""
    if schema is None:
        if preset is None or preset.schema_ is None:
            raise ConfigError("A schema file is required" + (f" for preset '{preset.name}'" if preset else ""))
        return preset.schema_
    if preset is not None and preset.schema_ is not None and schema.label_field != preset.schema_.label_field:
        raise ConfigError(f"Schema label field '{schema.label_field}' conflicts with preset '{preset.name}' label '{preset.schema_.label_field}'")
    return schema
