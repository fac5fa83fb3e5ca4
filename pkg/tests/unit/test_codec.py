import numpy as np
import pandas as pd
import pytest

from src.config import get_settings
from src.exceptions import ConfigError, ContainerFormatError, DataError, EmptyDatasetError, LeakageError, RowParseError, SchemaError
from src.schemas.flows.models import Codebook, FeatureSchema, FieldKind, FieldRole, FieldSpec, RawDataset, Scaler
from src.services.codec.container import dump_encoded, load_encoded, read_encoded, write_encoded
from src.services.codec.loader import FlowTableLoader, load_flow_table
from src.services.codec.pipeline import preprocess
from src.services.codec.presets import get_preset, normalize_label, resolve_schema
from src.services.codec.transform import fit_codebooks, oov_code_for


def _single_field_schema(kind: FieldKind = FieldKind.DISCRETE) -> FeatureSchema:
    return FeatureSchema(fields=[FieldSpec(name="proto", kind=kind), FieldSpec(name="label", role=FieldRole.LABEL)])


def _raw(values: list, split_tag: str = "train") -> RawDataset:
    return RawDataset(frame=pd.DataFrame({"proto": values}), labels=pd.Series(["Normal"] * len(values)), split_tag=split_tag)


def test_codebook_codes_are_evenly_spaced():
    """Test three sorted categories get codes -1, 0, 1."""
    (codebook,) = fit_codebooks(_raw(["udp", "tcp", "icmp", "tcp"]), _single_field_schema())

    assert codebook.legal_values == ["icmp", "tcp", "udp"]
    assert codebook.codes == [-1.0, 0.0, 1.0]
    assert codebook.oov_code == -0.5


def test_codebook_single_value():
    """Test a field with one training value gets code 0 and OOV code 0.5."""
    (codebook,) = fit_codebooks(_raw(["http", "http"]), _single_field_schema())

    assert codebook.codes == [0.0]
    assert codebook.oov_code == 0.5


def test_oov_code_picks_first_widest_gap():
    """Test the OOV code is the midpoint of the widest adjacent gap."""
    assert oov_code_for([-1.0, 1.0]) == 0.0
    assert oov_code_for([-1.0, 0.5, 1.0]) == pytest.approx(-0.25)


def test_fitting_rejects_test_split():
    """Test codebooks are never fitted on the test split."""
    with pytest.raises(LeakageError):
        fit_codebooks(_raw(["tcp"], split_tag="test"), _single_field_schema())


def test_codebook_validation():
    """Test codebook invariants."""
    with pytest.raises(ValueError):
        Codebook(field_name="f", legal_values=["a", "b"], codes=[0.5, -0.5], oov_code=0.0)
    with pytest.raises(ValueError):
        Codebook(field_name="f", legal_values=["a", "b"], codes=[-1.0, 1.0], oov_code=1.0)


def test_codebook_lookup_and_nearest_decode():
    """Test table lookup, OOV fallback and nearest-code decoding."""
    codebook = Codebook(field_name="proto", legal_values=["icmp", "tcp", "udp"], codes=[-1.0, 0.0, 1.0], oov_code=-0.5)

    encoded = codebook.encode(pd.Series(["udp", "sctp", "icmp"]))
    assert encoded.tolist() == [1.0, -0.5, -1.0]
    assert codebook.decode(np.array([0.999999, -0.5, 0.02]), "<oov>") == ["udp", "<oov>", "tcp"]


def test_scaler_midpoint():
    """Test min-max scaling to [-1, 1] and its inverse."""
    scaler = Scaler(field_name="bytes", raw_min=0.0, raw_max=100.0)

    assert scaler.encode(np.array([50.0]))[0] == 0.0
    assert scaler.encode(np.array([250.0, -10.0])).tolist() == [1.0, -1.0]
    assert scaler.decode(np.array([0.0]))[0] == 50.0


def test_constant_column_encodes_to_zero():
    """Test a zero-width range maps every value to 0."""
    scaler = Scaler(field_name="land", raw_min=3.0, raw_max=3.0)
    assert scaler.encode(np.array([3.0, 3.0])).tolist() == [0.0, 0.0]


def test_encode_decode_round_trip(toy_codec, toy_raw, toy_encoded):
    """Test decode(encode(x)) recovers the raw training rows."""
    decoded = toy_codec.decode(toy_encoded)

    assert decoded.frame["proto"].tolist() == toy_raw.frame["proto"].tolist()
    np.testing.assert_allclose(decoded.frame["bytes"].to_numpy(dtype=float), toy_raw.frame["bytes"].to_numpy(), rtol=1e-6)
    np.testing.assert_allclose(decoded.frame["duration"].to_numpy(dtype=float), toy_raw.frame["duration"].to_numpy(), rtol=1e-6)
    assert decoded.labels.tolist() == toy_raw.labels.tolist()


def test_encoded_range_and_labels(toy_encoded):
    """Test encoded features lie in [-1, 1] and labels follow the class order."""
    assert toy_encoded.features.min() >= -1.0
    assert toy_encoded.features.max() <= 1.0
    assert toy_encoded.class_counts() == {"Normal": 8, "DoS": 6, "Probe": 4}


def test_unseen_test_category_maps_to_oov(toy_codec, toy_raw):
    """Test unseen categories at test time take the OOV code."""
    frame = toy_raw.frame.copy()
    frame.loc[0, "proto"] = "sctp"
    encoded = toy_codec.encode(RawDataset(frame=frame, labels=toy_raw.labels, split_tag="test"))

    assert encoded.features[0, 0] == toy_codec.codebook("proto").oov_code
    assert toy_codec.illegal_cells(encoded) == 0
    assert toy_codec.illegal_cells(encoded, allow_oov=False) == 1


def test_codec_save_and_load(tmp_path, toy_codec):
    """Test the codec survives a JSON round trip."""
    path = tmp_path / "codec.json"
    toy_codec.save(path)
    assert toy_codec.load(path) == toy_codec


def test_loader_reads_headed_table(toy_csv, toy_schema):
    """Test a headed table loads in schema order."""
    raw = load_flow_table(toy_csv, toy_schema)

    assert raw.n_rows == 18
    assert list(raw.frame.columns) == ["proto", "bytes", "duration"]
    assert raw.split_tag == "train"


def test_loader_empty_dataset(tmp_path, toy_schema):
    """Test a header-only table is an empty dataset."""
    path = tmp_path / "empty.csv"
    path.write_text("proto,bytes,duration,label\n", encoding="utf-8")

    with pytest.raises(EmptyDatasetError, match="empty dataset"):
        load_flow_table(path, toy_schema)


def test_loader_missing_label_column(tmp_path, toy_schema):
    """Test a missing label column is a schema error naming it."""
    path = tmp_path / "nolabel.csv"
    path.write_text("proto,bytes,duration\ntcp,1,2\n", encoding="utf-8")

    with pytest.raises(SchemaError, match="label"):
        load_flow_table(path, toy_schema)


def test_loader_reports_bad_numeric_row(tmp_path, toy_schema):
    """Test an unparseable numeric cell raises with its row index."""
    path = tmp_path / "bad.csv"
    path.write_text("proto,bytes,duration,label\ntcp,1,2,Normal\nudp,abc,3,DoS\n", encoding="utf-8")

    with pytest.raises(RowParseError) as excinfo:
        load_flow_table(path, toy_schema)
    assert excinfo.value.row_index == 1
    assert excinfo.value.column == "bytes"


def test_loader_drops_non_finite_rows(tmp_path, toy_schema):
    """Test non-finite cells are dropped under the drop policy and rejected otherwise."""
    path = tmp_path / "inf.csv"
    path.write_text("proto,bytes,duration,label\ntcp,1,2,Normal\nudp,Infinity,3,DoS\ntcp,NaN,3,DoS\n", encoding="utf-8")

    assert FlowTableLoader(non_finite="drop").load(path, toy_schema).n_rows == 1
    with pytest.raises(RowParseError):
        FlowTableLoader().load(path, toy_schema)


def test_loader_headerless_with_label_map(tmp_path):
    """Test header-less tables use the schema's column list and labels map to families."""
    schema = FeatureSchema(
        fields=[FieldSpec(name="proto", kind=FieldKind.DISCRETE), FieldSpec(name="bytes"), FieldSpec(name="label", role=FieldRole.LABEL)],
        columns=["proto", "bytes", "label", "difficulty"],
    )
    path = tmp_path / "raw.txt"
    path.write_text("tcp,10,normal,21\nudp,20,smurf,18\ntcp,30,mystery,3\nicmp,5,  Neptune ,11\n", encoding="utf-8")

    raw = FlowTableLoader().load(path, schema, label_map={"normal": "Normal", "smurf": "DoS", "neptune": "DoS"})

    assert raw.labels.tolist() == ["Normal", "DoS", "DoS"]
    assert raw.frame["bytes"].tolist() == [10.0, 20.0, 5.0]


def test_loader_folds_label_case_without_map(tmp_path, toy_schema):
    """Test labels differing only in case or whitespace collapse to one class without a label map."""
    path = tmp_path / "mixed.csv"
    path.write_text("proto,bytes,duration,label\ntcp,1,2,DoS\nudp,2,3,dos \nicmp,3,4, DOS\ntcp,4,5,Normal\n", encoding="utf-8")

    raw = load_flow_table(path, toy_schema)

    assert raw.labels.tolist() == ["DoS", "DoS", "DoS", "Normal"]

    known = load_flow_table(path, toy_schema, known_classes=["DOS", "Normal"])
    assert known.labels.unique().tolist() == ["DOS", "Normal"]


def test_normalize_label():
    """Test label normalization folds case and whitespace."""
    assert normalize_label("  Web Attack \t Brute   Force ") == "web attack brute force"


def test_presets_and_schema_resolution(toy_schema):
    """Test preset lookup and schema override rules."""
    nsl = get_preset("nsl-kdd")
    assert nsl.schema_.n_features == 41
    assert nsl.schema_.discrete_names == ["protocol_type", "service", "flag"]
    assert get_preset("unsw-nb15").schema_.n_features == 42

    with pytest.raises(ConfigError):
        get_preset("kdd99")
    with pytest.raises(ConfigError):
        resolve_schema(get_preset("cicids2017"), None)
    with pytest.raises(ConfigError):
        resolve_schema(get_preset("unsw-nb15"), toy_schema)
    assert resolve_schema(get_preset("cicids2017"), toy_schema) is toy_schema


def test_container_preserves_dataset(tmp_path, toy_encoded):
    """Test the FSE1 container keeps labels, names and provenance."""
    path = tmp_path / "train.fse"
    digest = write_encoded(path, toy_encoded)
    loaded = read_encoded(path)

    assert len(digest) == 64
    assert path.read_bytes()[:4] == b"FSE1"
    assert loaded.class_names == toy_encoded.class_names
    assert loaded.feature_names == toy_encoded.feature_names
    assert loaded.labels.tolist() == toy_encoded.labels.tolist()
    assert loaded.provenance.tolist() == toy_encoded.provenance.tolist()
    np.testing.assert_allclose(loaded.features, toy_encoded.features, atol=1e-7)


def test_container_rejects_bad_magic(toy_encoded):
    """Test a wrong magic is a format error."""
    blob = b"XXXX" + dump_encoded(toy_encoded)[4:]
    with pytest.raises(ContainerFormatError):
        load_encoded(blob)


def test_preprocess_holdout(toy_csv, toy_schema):
    """Test a single table is split, fitted on train and encoded reproducibly."""
    settings = get_settings()
    first = preprocess(toy_csv, schema=toy_schema, settings=settings)
    second = preprocess(toy_csv, schema=toy_schema, settings=settings)

    assert first.train.split_tag == "train"
    assert first.test.split_tag == "test"
    assert first.train.n_rows + first.test.n_rows == 18
    assert dump_encoded(first.train) == dump_encoded(second.train)
    assert dump_encoded(first.test) == dump_encoded(second.test)


def test_preprocess_unknown_test_label(tmp_path, toy_csv, toy_schema):
    """Test test rows of a class never seen in training are rejected without a preset."""
    test_path = tmp_path / "test.csv"
    test_path.write_text("proto,bytes,duration,label\ntcp,1,2,Worms\n", encoding="utf-8")

    with pytest.raises(DataError):
        preprocess(toy_csv, test_path, schema=toy_schema)
