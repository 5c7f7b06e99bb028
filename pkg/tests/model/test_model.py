import warnings

import numpy as np
import pytest

from model.builder import build_model, forward, stage_channels
from model.checkpoint import load_model, model_from_arrays, model_to_arrays, save_model
from model.complexity import (compact_head_params, count_flops, count_params, decoupled_head_params, flops_by_group,
                              params_by_group, profile_flops)
from model.head import scale_params
from model.utils.graph_render import render_graph
from model.utils.weights_io import read_container, write_container
from nn.blocks import conv_bn_silu, dsconv, init_conv, init_dsconv
from nn.utils.block_params import BlockParams
from tensor.tensor import Tensor
from tensor.utils.flop_counter import FlopCounter
from utils.errors import ConfigError, DataError, ShapeError


@pytest.fixture(scope="module")
def nano():
    return build_model(0.25, 2, 640)


@pytest.fixture(scope="module")
def tiny():
    return build_model(0.125, 2, 96, seed=3)


class TestBuild:
    def test_stage_channels(self, nano):
        assert stage_channels(0.25) == [16, 32, 64, 128, 256]
        assert nano.stage_channels() == [16, 32, 64, 128, 256]

    def test_backbone_occupies_first_ten_layers(self, nano):
        assert [layer.group for layer in nano.layers[:10]] == ["backbone"] * 10
        assert nano.layers[10].group == "neck"
        assert nano.layers[9].kind == "sppf_c2psa"

    def test_param_total_near_reference(self, nano):
        assert abs(count_params(nano) - 2.38e6) <= 0.10 * 2.38e6

    def test_param_count_matches_enumeration(self, nano):
        total = 0
        for layer in nano.layers:
            for _, tensor in layer.params.named_tensors():
                total += int(np.prod(tensor.shape))
        assert count_params(nano) == total
        assert sum(params_by_group(nano).values()) == total

    def test_params_grow_with_width(self):
        counts = [count_params(build_model(w, 2, 64)) for w in (0.125, 0.25, 0.5)]
        assert counts[0] < counts[1] < counts[2]

    @pytest.mark.parametrize("kwargs", [
        {"width_multiple": 0.3}, {"input_size": 100}, {"neck": "bifpn"}, {"num_classes": 0},
    ])
    def test_invalid_build_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            build_model(**kwargs)


class TestHead:
    def test_classification_tower_is_shared(self, nano):
        p = nano.head.params
        scales = [scale_params(p, s) for s in range(3)]
        for name in ("cls.dw.w", "cls.pw.w", "cls.pred.w", "cls.pred.b"):
            assert scales[0][name] is scales[1][name] is scales[2][name]
        assert "reg0.cv1.w" in scales[0] and "reg0.cv1.w" not in scales[1]

    def test_mutating_shared_classifier_shows_at_every_scale(self, tiny):
        model = tiny.clone()
        images = np.random.default_rng(0).uniform(size=(1, 3, 96, 96))
        before = forward(model, images).cls_logits
        model.head.params["cls.pred.b"].data += 1.0
        after = forward(model, images).cls_logits
        for b, a in zip(before, after):
            assert np.allclose(a.data - b.data, 1.0)

    def test_compact_head_at_most_half_of_decoupled(self, nano):
        assert params_by_group(nano)["head"] <= 0.5 * decoupled_head_params(nano)

    @pytest.mark.parametrize("width, size", [(0.125, 64), (0.25, 640), (0.5, 96)])
    def test_head_closed_form_matches_built_head(self, width, size):
        model = build_model(width, 2, size)
        assert compact_head_params(model) == params_by_group(model)["head"]


class TestForward:
    def test_head_scales_at_640(self, nano):
        heads = forward(nano, np.zeros((1, 3, 640, 640)))
        assert heads.grid_shapes() == [(80, 80), (40, 40), (20, 20)]
        assert heads.box_dist[0].shape == (1, 64, 80, 80)
        assert heads.cls_logits[2].shape == (1, 2, 20, 20)

    def test_tiny_scales(self, tiny):
        heads = forward(tiny, np.zeros((1, 3, 96, 96)))
        assert heads.grid_shapes() == [(12, 12), (6, 6), (3, 3)]

    def test_zero_image_is_finite(self, tiny):
        heads = forward(tiny, np.zeros((2, 3, 96, 96)))
        for t in heads.cls_logits + heads.box_dist:
            assert np.all(np.isfinite(t.data))

    def test_identical_images_identical_maps(self, tiny):
        image = np.random.default_rng(1).uniform(size=(3, 96, 96))
        heads = forward(tiny, np.stack([image, image]))
        for t in heads.cls_logits + heads.box_dist:
            assert np.array_equal(t.data[0], t.data[1])

    def test_eval_is_deterministic(self, tiny):
        images = np.random.default_rng(2).uniform(size=(1, 3, 96, 96))
        a = forward(tiny, images).box_dist[1].data
        b = forward(tiny, images).box_dist[1].data
        assert np.array_equal(a, b)

    def test_wrong_channel_count(self, tiny):
        with pytest.raises(ShapeError):
            forward(tiny, np.zeros((1, 4, 96, 96)))

    def test_train_mode_records_tape(self, tiny):
        model = tiny.clone()
        heads = forward(model, np.random.default_rng(3).uniform(size=(2, 3, 96, 96)), mode="train")
        assert heads.cls_logits[0].node is not None

    def test_freeze_controls_trainable_set(self, tiny):
        model = tiny.clone()
        counts = []
        for frozen in (range(10), range(5), ()):
            model.freeze(frozen)
            counts.append(sum(t.size for t in model.trainable_parameters().values()))
        assert counts[0] < counts[1] < counts[2]


class TestFlops:
    def test_dsconv_layer_ratio(self, rng):
        c, size = 64, 16
        dense, separable = BlockParams(), BlockParams()
        init_conv(dense, "conv", c, c, 3, rng)
        init_dsconv(separable, "ds", c, c, rng)
        x = Tensor(np.zeros((1, c, size, size)))
        with FlopCounter() as dense_count:
            conv_bn_silu(x, dense, 2)
        with FlopCounter() as ds_count:
            dsconv(x, separable, "ds", stride=2)
        ratio = ds_count.total / dense_count.total
        assert ratio == pytest.approx(1 / c + 1 / 9, rel=0.05)

    def test_lfpn_neck_cheaper_than_dense(self):
        lfpn = flops_by_group(build_model(0.25, 2, 128, neck="lfpn"))
        dense = flops_by_group(build_model(0.25, 2, 128, neck="dense"))
        assert lfpn["neck"] <= 0.70 * dense["neck"]
        assert lfpn["backbone"] == dense["backbone"]

    def test_groups_add_up(self, tiny):
        counter = profile_flops(tiny)
        assert sum(counter.by_scope[g] for g in ("backbone", "neck", "head")) == counter.total
        assert count_flops(tiny) == counter.total


class TestWeights:
    def test_container_round_trip_is_bit_exact(self, tmp_path, tiny):
        first = tmp_path / "a.rlw"
        second = tmp_path / "b.rlw"
        save_model(tiny, str(first))
        write_container(str(second), read_container(str(first)))
        assert first.read_bytes() == second.read_bytes()

    def test_loaded_model_reproduces_outputs(self, tmp_path, tiny):
        path = tmp_path / "m.rlw"
        save_model(tiny, str(path))
        loaded = load_model(str(path))
        images = np.random.default_rng(4).uniform(size=(1, 3, 96, 96))
        a = forward(tiny, images).cls_logits[0].data
        b = forward(loaded, images).cls_logits[0].data
        assert np.allclose(a, b, atol=1e-4)
        assert count_params(loaded) == count_params(tiny)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "w.rlw"
        write_container(str(path), {"x": np.arange(6, dtype=np.float32).reshape(2, 3)})
        blob = path.read_bytes()
        assert blob[:4] == b"RLW1"
        assert blob[4:12] == (1).to_bytes(4, "little") + (1).to_bytes(4, "little")
        assert len(blob) == 12 + 2 + 1 + 1 + 8 + 24

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.rlw"
        path.write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(DataError):
            read_container(str(path))

    def test_truncated_file(self, tmp_path, tiny):
        path = tmp_path / "t.rlw"
        save_model(tiny, str(path))
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(DataError):
            read_container(str(path))

    def test_arrays_include_running_stats(self, tiny):
        arrays = model_to_arrays(tiny)
        assert "0.conv.running_mean" in arrays
        assert arrays["meta.input_size"] == 96

    def test_one_element_metadata_loads_without_warnings(self, tiny):
        arrays = model_to_arrays(tiny)
        for key in [k for k in arrays if k.startswith("meta.")]:
            arrays[key] = arrays[key].reshape(1)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            loaded = model_from_arrays(arrays)
        assert (loaded.input_size, loaded.reg_max, loaded.neck) == (96, tiny.reg_max, tiny.neck)

    def test_metadata_with_several_values(self, tiny):
        arrays = model_to_arrays(tiny)
        arrays["meta.input_size"] = np.array([96, 96])
        with pytest.raises(DataError, match="meta.input_size"):
            model_from_arrays(arrays)


def test_render_graph(tiny):
    source = render_graph(tiny).source
    assert "9: sppf_c2psa" in source
    assert "24: cdh" in source
