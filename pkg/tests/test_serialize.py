import numpy as np
import pytest

from tvssm.datagen import SwitchConfig, build_four_mode_dataset
from tvssm.network import LayerSpec, NetworkSpec, init_network, network_forward
from tvssm.serialize import (
    checkpoint_load,
    checkpoint_save,
    dataset_load,
    dataset_save,
    load_container,
    save_container,
)


def test_container_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "a": rng.standard_normal((3, 4)),
        "b": rng.integers(0, 100, size=7),
        "empty": np.zeros((0, 2)),
    }
    meta = {"kind": "test", "note": "hello", "value": 0.1 + 0.2}
    save_container(tmp_path / "x.bin", meta, tensors)
    meta2, tensors2 = load_container(tmp_path / "x.bin")
    assert meta2 == meta
    assert meta2["value"] == meta["value"]  # float repr round-trips exactly
    for name in tensors:
        np.testing.assert_array_equal(tensors2[name], tensors[name])


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(IOError, match="magic"):
        load_container(p)


def checkpoint_spec():
    layers = (
        LayerSpec(h=3, n=2, k_a=3, k_b=2, k_c=2, tv_a=True, tv_b=True, tv_c=True,
                  activation="gelu"),
        LayerSpec(h=2, n=4),
    )
    return NetworkSpec(2, 1, layers, t=16)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    params = init_network(checkpoint_spec(), rng)
    # perturb running stats so they are not at their defaults
    for lp in params.layers:
        lp.running_mean += rng.standard_normal(lp.running_mean.shape)
        lp.running_var += rng.uniform(0, 1, lp.running_var.shape)
    checkpoint_save(tmp_path / "model.ckpt", params, extra_meta={"seed": 1})
    loaded = checkpoint_load(tmp_path / "model.ckpt")

    assert loaded.spec == params.spec
    for (n1, t1), (n2, t2) in zip(params.trainable_tensors(), loaded.trainable_tensors()):
        assert n1 == n2
        np.testing.assert_array_equal(t1, t2)
    for lp1, lp2 in zip(params.layers, loaded.layers):
        assert lp1.dicts_a == lp2.dicts_a
        assert lp1.dicts_b == lp2.dicts_b
        assert lp1.dicts_c == lp2.dicts_c
        np.testing.assert_array_equal(lp1.running_mean, lp2.running_mean)
        np.testing.assert_array_equal(lp1.running_var, lp2.running_var)

    x = rng.standard_normal((2, 2, 16))
    np.testing.assert_array_equal(network_forward(params, x), network_forward(loaded, x))


def test_checkpoint_save_is_byte_deterministic(tmp_path):
    params = init_network(checkpoint_spec(), np.random.default_rng(2))
    checkpoint_save(tmp_path / "a.ckpt", params)
    checkpoint_save(tmp_path / "b.ckpt", params)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_dataset_round_trip(tmp_path):
    ds = build_four_mode_dataset(SwitchConfig(True, True, True), n_samples=12, seed=3)
    dataset_save(tmp_path / "data.bin", ds)
    loaded = dataset_load(tmp_path / "data.bin")
    np.testing.assert_array_equal(loaded.inputs, ds.inputs)
    np.testing.assert_array_equal(loaded.targets, ds.targets)
    assert loaded.splits == ds.splits
    assert loaded.seed == ds.seed
    assert loaded.provenance == ds.provenance
    assert loaded.clean is None


def test_wrong_kind_rejected(tmp_path):
    ds = build_four_mode_dataset(SwitchConfig(True, True, True), n_samples=4, seed=0)
    dataset_save(tmp_path / "data.bin", ds)
    with pytest.raises(IOError, match="checkpoint"):
        checkpoint_load(tmp_path / "data.bin")
