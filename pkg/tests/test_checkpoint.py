import numpy as np
import pytest

from stga.checkpoint import CheckpointError, decode_blocks, encode_blocks, load_checkpoint, save_checkpoint
from stga.graph import Mode
from stga.model import ModelConfig, ModelParams
from stga.nn.optim import AdamState


def test_round_trip_is_bit_exact(tmp_path):
    cfg = ModelConfig(mode="hh", hidden=6, embed=3, lam=0.35)
    p = ModelParams.init(cfg, 11)
    p.alpha.value[...] = 0.123456789
    adam = AdamState(step=7)
    adam.m["head.W"] = np.random.default_rng(0).normal(size=p.head.W.shape)
    adam.v["head.W"] = np.random.default_rng(1).uniform(size=p.head.W.shape)
    path = save_checkpoint(tmp_path / "c.stga", p, cfg, epoch=4, adam=adam)
    ck = load_checkpoint(path)
    assert ck.config == cfg and ck.epoch == 4
    for name, t in p.tensors().items():
        got = ck.params.tensors()[name].value
        assert got.shape == t.value.shape
        assert got.tobytes() == t.value.tobytes(), name
    assert ck.params.alpha.value.shape == ()
    assert ck.adam.step == 7
    assert ck.adam.m["head.W"].tobytes() == adam.m["head.W"].tobytes()
    assert save_checkpoint(tmp_path / "d.stga", ck.params, ck.config, 4, ck.adam).read_bytes() == path.read_bytes()


def test_layout():
    data = encode_blocks({"a": np.array([[1.0, 2.0]]), "s": np.array(3.0)})
    assert data.startswith(b"STGA1\na\t2\t1\t2\n")
    assert data.endswith(b"END\n")
    assert b"s\t0\n" in data
    np.testing.assert_array_equal(np.frombuffer(data[len(b"STGA1\na\t2\t1\t2\n"):][:16], "<f8"), [1.0, 2.0])
    out = decode_blocks(data)
    assert out["s"].shape == () and float(out["s"]) == 3.0


@pytest.mark.parametrize("mutate", [
    lambda d: b"XXXX" + d[4:],
    lambda d: d[:-4],
    lambda d: d[:40],
    lambda d: d + b"junk",
])
def test_corrupt_files_rejected(tmp_path, mutate):
    cfg = ModelConfig(hidden=4, embed=2)
    path = save_checkpoint(tmp_path / "c.stga", ModelParams.init(cfg, 0), cfg)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.stga")


def test_missing_block(tmp_path):
    (tmp_path / "c.stga").write_bytes(encode_blocks({"alpha": np.array(0.2)}))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "c.stga")


def test_mode_survives(tmp_path):
    for mode in (Mode.HH, Mode.HHO):
        cfg = ModelConfig(mode=mode, hidden=4, embed=2)
        assert load_checkpoint(save_checkpoint(tmp_path / "c.stga", ModelParams.init(cfg, 0), cfg)).config.mode is mode
