import numpy as np
import pytest

from pfan.layers import (LayerSpec, ParamStore, WeightFormatError,
                         WeightShapeError, count_params, init_params,
                         load_into, load_weights, save_weights)
from pfan.model import Generator, PfanConfig


def make_store(seed=0):
    store = ParamStore()
    rng = np.random.default_rng(seed)
    init_params(LayerSpec("linear", 64, 64), rng, store, "fc")
    init_params(LayerSpec("conv", 3, 64, kernel=3), rng, store, "conv")
    init_params(LayerSpec("norm", 64, 64), rng, store, "ln")
    return store


class TestInit:
    def test_deterministic_under_seed(self):
        a, b = make_store(5), make_store(5)
        for (na, ta), (nb, tb) in zip(a.items(), b.items()):
            assert na == nb
            assert np.array_equal(ta.data, tb.data)

    def test_linear_param_count(self):
        store = ParamStore()
        init_params(LayerSpec("linear", 64, 64), np.random.default_rng(0), store, "fc")
        assert count_params(store) == 64 * 64 + 64

    def test_weight_stddev(self):
        store = ParamStore()
        init_params(LayerSpec("linear", 400, 250), np.random.default_rng(0), store, "big")
        w = store["big.w"].data
        assert w.size == 100_000
        assert abs(w.std() - 0.02) < 0.05 * 0.02

    def test_bias_zero(self):
        store = make_store()
        assert np.all(store["fc.b"].data == 0)

    def test_groups_must_divide(self):
        with pytest.raises(ValueError):
            LayerSpec("conv", 6, 8, kernel=3, groups=4)


class TestCount:
    def test_empty(self):
        assert count_params(ParamStore()) == 0

    def test_conv_3_to_64(self):
        store = ParamStore()
        init_params(LayerSpec("conv", 3, 64, kernel=3), np.random.default_rng(0),
                    store, "c")
        assert count_params(store) == 3 * 64 * 9 + 64

    def test_default_generator_stable_and_under_budget(self):
        counts = {count_params(Generator(PfanConfig(), seed=s).store)
                  for s in (0, 1, 2)}
        assert len(counts) == 1
        assert counts.pop() < 1_000_000


class TestSerialization:
    def test_roundtrip_bit_exact(self, tmp_path):
        store = make_store(3)
        path = tmp_path / "w.pfw"
        save_weights(store, path)
        loaded = load_weights(path)
        assert loaded.names() == store.names()
        for name, t in store.items():
            assert np.array_equal(loaded[name].data, t.data)
            assert loaded[name].data.dtype == t.data.dtype
        assert count_params(loaded) == count_params(store)

    def test_load_into_shape_mismatch_names_parameter(self, tmp_path):
        store = make_store()
        path = tmp_path / "w.pfw"
        save_weights(store, path)
        other = ParamStore()
        rng = np.random.default_rng(0)
        init_params(LayerSpec("linear", 32, 64), rng, other, "fc")
        init_params(LayerSpec("conv", 3, 64, kernel=3), rng, other, "conv")
        init_params(LayerSpec("norm", 64, 64), rng, other, "ln")
        with pytest.raises(WeightShapeError, match="fc.w"):
            load_into(other, load_weights(path))

    def test_truncated_file(self, tmp_path):
        store = make_store()
        path = tmp_path / "w.pfw"
        save_weights(store, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(WeightFormatError, match="truncated"):
            load_weights(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.pfw"
        path.write_bytes(b"NOTAWTFILE" + b"\0" * 16)
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(path)

    def test_version_mismatch(self, tmp_path):
        store = make_store()
        path = tmp_path / "w.pfw"
        save_weights(store, path)
        blob = bytearray(path.read_bytes())
        blob[7] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(WeightFormatError, match="version"):
            load_weights(path)

    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("x", np.zeros(3, dtype=np.float32))
        with pytest.raises(ValueError):
            store.add("x", np.zeros(3, dtype=np.float32))
