import json
from dataclasses import replace

import numpy as np
import pytest

from attrseq.amas import forward, init_amas
from attrseq.checkpoint import (
    blob_path,
    inspect,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from attrseq.data import Vocabulary, load_jsonl
from attrseq.errors import SchemaError
from attrseq.mlas import init_mlas, mlas_embed
from attrseq.nas import init_nas, nas_embed
from attrseq.numerics import Rng
from attrseq.olas import init_olas, olas_features

from conftest import jitter_params, toy_record

VOCAB = Vocabulary(tuple(f"item{k}" for k in range(5)))


def _models():
    rng = Rng(4)
    return {
        "nas": (init_nas(rng.child("n"), 3, 5, d=4, hidden=(3,)), nas_embed),
        "mlas": (init_mlas(rng.child("m"), 3, 5, "att-centric", (4,), 3, d=4, act="tanh", margin=2.0), mlas_embed),
        "olas": (init_olas(rng.child("o"), 3, 5, n=4, fc_widths=(3, 4), lstm_width=3, distance="manhattan"),
                 olas_features),
        "amas": (init_amas(rng.child("a"), 3, 5, ("x", "y", "z"), "asa", 3, 4, scalar_scores=True, l2=0.01),
                 lambda m, rec: forward(m, rec)[0]),
    }


@pytest.mark.parametrize("framework", ["nas", "mlas", "olas", "amas"])
def test_round_trip_is_bitwise(tmp_path, framework):
    model, apply = _models()[framework]
    model = replace(model, params=jitter_params(model.params, Rng(1)))
    path = save_checkpoint(tmp_path / "m.json", model, VOCAB, extra={"note": "x"})
    ckpt = load_checkpoint(path)
    assert ckpt.framework == framework and ckpt.vocab == VOCAB and ckpt.extra == {"note": "x"}
    restored = model_from_checkpoint(ckpt)
    assert restored.hyperparameters() == model.hyperparameters()
    assert set(restored.params) == set(model.params)
    for k, v in model.params.items():
        assert restored.params[k].tobytes() == v.tobytes()
    rec = toy_record(Rng(2), 3, 5, 4)
    assert apply(restored, rec).tobytes() == apply(model, rec).tobytes()


@pytest.mark.parametrize("framework", ["nas", "mlas", "olas", "amas"])
def test_save_load_save_reproduces_bytes(tmp_path, framework):
    model, _ = _models()[framework]
    first = save_checkpoint(tmp_path / "a.json", model, VOCAB)
    second = save_checkpoint(tmp_path / "b.json", model_from_checkpoint(load_checkpoint(first)), VOCAB)
    assert blob_path(first).read_bytes() == blob_path(second).read_bytes()
    env_a, env_b = json.loads(first.read_text()), json.loads(second.read_text())
    assert env_a["blob"] == "a.bin" and env_b["blob"] == "b.bin"
    env_b["blob"] = "a.bin"
    assert env_a == env_b


def test_schema_round_trip(tmp_path, fixture_path):
    ds = load_jsonl(fixture_path)
    model = init_nas(Rng(0), ds.u, ds.vocab.r, d=3)
    path = save_checkpoint(tmp_path / "m.json", model, ds.vocab, ds.schema)
    ckpt = load_checkpoint(path)
    assert ckpt.schema == ds.schema and ckpt.vocab == ds.vocab


def _edit_envelope(path, **changes):
    env = json.loads(path.read_text())
    env.update(changes)
    path.write_text(json.dumps(env))


@pytest.mark.parametrize("change", [{"version": 2}, {"format": "other"}, {"framework": "rnn"}])
def test_mismatched_envelope_is_rejected(tmp_path, change):
    path = save_checkpoint(tmp_path / "m.json", _models()["nas"][0], VOCAB)
    _edit_envelope(path, **change)
    with pytest.raises(SchemaError):
        load_checkpoint(path)


def test_corrupted_blob_is_rejected(tmp_path):
    path = save_checkpoint(tmp_path / "m.json", _models()["olas"][0], VOCAB)
    blob = bytearray(blob_path(path).read_bytes())
    blob[5] ^= 0xFF
    blob_path(path).write_bytes(bytes(blob))
    with pytest.raises(SchemaError):
        load_checkpoint(path)


def test_non_json_and_missing_hyperparameters(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    with pytest.raises(SchemaError):
        load_checkpoint(bad)
    path = save_checkpoint(tmp_path / "m.json", _models()["mlas"][0], VOCAB)
    env = json.loads(path.read_text())
    del env["hyperparameters"]["fusion"]
    path.write_text(json.dumps(env))
    with pytest.raises(SchemaError):
        model_from_checkpoint(load_checkpoint(path))


def test_unknown_object_cannot_be_saved(tmp_path):
    with pytest.raises(SchemaError):
        save_checkpoint(tmp_path / "m.json", object(), VOCAB)


def test_inspect_summary(tmp_path):
    model = _models()["amas"][0]
    info = inspect(save_checkpoint(tmp_path / "m.json", model, VOCAB))
    assert info["framework"] == "amas" and info["version"] == 1 and info["r"] == 5
    assert info["n_parameters"] == sum(v.size for v in model.params.values())
    assert info["tensors"]["head.W"] == [3, 7]


def test_blob_is_little_endian_float64(tmp_path):
    model = _models()["nas"][0]
    path = save_checkpoint(tmp_path / "m.json", model, VOCAB)
    env = json.loads(path.read_text())
    entry = next(t for t in env["tensors"] if t["name"] == "out.b")
    raw = blob_path(path).read_bytes()[entry["offset"]:entry["offset"] + 8 * entry["count"]]
    np.testing.assert_array_equal(np.frombuffer(raw, dtype="<f8"), model.params["out.b"])
