import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crydet.errors import ShapeError
from crydet.features import LogMelSpectrogram
from crydet.model import (
    ADM,
    CCA,
    ESA,
    PRESETS,
    AdmConfig,
    CryDetector,
    EsaConfig,
    ModelConfig,
    complexity_report,
    contrast,
    load_model_config,
    model_forward,
    module_complexity,
    save_model_config,
)
from crydet.nn import BSConv2d, Conv2d, ConvSpec, Tensor

SMALL = PRESETS["small"]
TINY = PRESETS["tiny"]


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


class TestESA:
    def test_shape(self, rng):
        esa = ESA(8, EsaConfig(), rng)
        assert esa(T(rng.standard_normal((1, 8, 16, 20)))).shape == (1, 8, 16, 20)

    def test_zero_expand_gives_half(self, rng):
        esa = ESA(8, EsaConfig(), rng)
        esa.expand.weight.data[:] = 0
        esa.expand.bias.data[:] = 0
        x = rng.standard_normal((2, 8, 9, 11))
        np.testing.assert_array_equal(esa(T(x)).data, 0.5 * x)

    def test_too_small(self, rng):
        with pytest.raises(ShapeError):
            ESA(4, EsaConfig(), rng)(T(np.ones((1, 4, 3, 8))))

    @given(st.integers(0, 10**6))
    def test_magnitude_bound(self, seed):
        r = np.random.default_rng(seed)
        esa = ESA(4, EsaConfig(2, 1), r)
        x = r.standard_normal((1, 4, 6, 7)) * 10
        assert np.all(np.abs(esa(T(x)).data) < np.abs(x))


class TestCCA:
    def test_constant_channel(self):
        x = np.full((1, 2, 3, 3), 4.0)
        x[0, 1] = -1.5
        np.testing.assert_array_equal(contrast(T(x)).data, [[4.0, -1.5]])

    def test_hand_example(self):
        assert contrast(T([[[[0.0, 2.0]]]])).data.item() == 2.0

    @given(st.integers(0, 10**6))
    def test_std_part_nonnegative(self, seed):
        x = np.random.default_rng(seed).standard_normal((2, 3, 4, 5))
        z = contrast(T(x)).data
        assert np.all(z - x.mean(axis=(2, 3)) >= 0)

    def test_scales_in_unit_interval_and_shape(self, rng):
        cca = CCA(8, 4, rng)
        x = T(rng.standard_normal((2, 8, 5, 6)))
        s = cca.scales(x).data
        assert s.shape == (2, 8) and np.all((s > 0) & (s < 1))
        assert cca(x).shape == x.shape


class TestADM:
    def test_shape(self, rng):
        adm = ADM(64, AdmConfig(32, 64), rng)
        for p in adm.parameters():
            p.data[:] = rng.standard_normal(p.shape) * 0.1
        assert adm(T(rng.standard_normal((64, 16, 24)))).shape == (64, 16, 24)

    def test_zero_weights_identity(self, rng):
        adm = ADM(6, AdmConfig(3, 5), rng)
        for p in adm.parameters():
            p.data[:] = 0
        x = rng.standard_normal((2, 6, 4, 5))
        assert np.array_equal(adm(T(x)).data, x)

    def test_fresh_module_is_identity(self, rng):
        x = rng.standard_normal((1, 6, 4, 5))
        assert np.array_equal(ADM(6, AdmConfig(3, 5), rng)(T(x)).data, x)

    def test_frequency_stage_time_equivariant(self, rng):
        adm = ADM(4, AdmConfig(3, 5), rng)
        adm.freq_proj.weight.data[:] = rng.standard_normal(adm.freq_proj.weight.shape)
        adm.time_proj.weight.data[:] = rng.standard_normal(adm.time_proj.weight.shape)
        x = rng.standard_normal((1, 4, 5, 7))
        perm = rng.permutation(7)
        a = adm.frequency_stage(T(x)).data[..., perm]
        b = adm.frequency_stage(T(x[..., perm])).data
        np.testing.assert_allclose(a, b, rtol=1e-13)
        a2 = adm.time_stage(T(x)).data[..., perm]
        b2 = adm.time_stage(T(x[..., perm])).data
        assert not np.allclose(a2, b2)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ADM(4, AdmConfig(2, 2), rng)(T(np.zeros((1, 5, 3, 3))))


class TestEncoderAndModel:
    def test_small_preset_taps(self):
        model = CryDetector(SMALL)
        x = T(np.random.default_rng(0).standard_normal((1, 1, 128, 199)))
        taps = model.encoder.taps(x)
        assert [t.shape[1:] for t in taps] == [(16, 64, 99), (32, 32, 49), (64, 16, 24)]
        assert model.encoder.concatenated(x).shape == (1, 112, 16, 24)
        assert SMALL.block_output_hw() == [(64, 99), (32, 49), (16, 24)]

    def test_esa_ablation_keeps_shapes(self):
        x = T(np.random.default_rng(0).standard_normal((1, 1, 128, 199)))
        a = CryDetector(SMALL).encoder.concatenated(x)
        b = CryDetector(SMALL.ablate("esa")).encoder.concatenated(x)
        assert a.shape == b.shape and not np.allclose(a.data, b.data)

    def test_zero_input_zero_conv_output(self):
        model = CryDetector(TINY)
        out = model.encoder.blocks[0].conv(T(np.zeros((1, 1, 128, 199))))
        assert not np.any(out.data)

    def test_probability_range_and_determinism(self, rng):
        model = CryDetector(TINY, seed=3)
        x = rng.standard_normal((3, 1, 128, 199)) * 5
        p = model.proba(x)
        assert p.shape == (3,) and np.all((p >= 0) & (p <= 1))
        assert np.array_equal(p, model.proba(x))

    def test_saturated_classifier(self, rng):
        model = CryDetector(TINY)
        model.classifier.fc2.weight.data[:] = 0
        model.classifier.fc2.bias.data[:] = 20
        assert model_forward(LogMelSpectrogram(rng.standard_normal((128, 199))), model) == pytest.approx(1.0, abs=1e-8)

    def test_wrong_shape(self):
        model = CryDetector(TINY)
        with pytest.raises(ShapeError):
            model_forward(np.zeros((128, 198)), model)
        with pytest.raises(ShapeError):
            model(np.zeros((1, 2, 128, 199)))

    def test_same_seed_same_weights(self):
        a, b = CryDetector(TINY, seed=7), CryDetector(TINY, seed=7)
        for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert ka == kb and np.array_equal(va, vb)

    def test_proba_restores_training_mode(self, rng):
        model = CryDetector(TINY)
        model.proba(rng.standard_normal((1, 1, 128, 199)))
        assert model.training

    def test_config_rejects_too_many_blocks(self):
        with pytest.raises(ShapeError):
            ModelConfig(channels=(1,) * 8)

    def test_unknown_ablation(self):
        with pytest.raises(ValueError):
            ModelConfig().ablate("bsconv")


class TestComplexity:
    def test_standard_conv(self, rng):
        rep = module_complexity(Conv2d(ConvSpec(3, 16, 3, padding=1), rng), (3, 128, 199))
        assert rep.n_params == 448
        assert rep.flops == 2 * 432 * 128 * 199

    def test_bsconv(self, rng):
        rep = module_complexity(BSConv2d(ConvSpec(3, 16, 3, padding=1), rng), (3, 128, 199))
        assert rep.n_params == 192 + 16
        assert rep.flops == 2 * (3 * 16 + 9 * 16) * 128 * 199

    def test_default_budget(self):
        rep = complexity_report()
        assert 1.0 <= rep.np_millions <= 2.0
        assert 0.3 <= rep.flops_giga <= 0.6

    def test_macs_match_parameter_count_for_linear_parts(self, rng):
        # for a 1x1 spatial input a conv's MAC count equals its weight count
        conv = Conv2d(ConvSpec(5, 7, 1), rng, bias=False)
        assert module_complexity(conv, (5, 1, 1)).flops == 2 * conv.num_parameters()


class TestConfigFile:
    def test_roundtrip(self, tmp_path):
        cfg = dataclasses.replace(SMALL, use_cca=False, esa=EsaConfig(2, 3))
        save_model_config(tmp_path / "m.ini", cfg)
        assert load_model_config(tmp_path / "m.ini") == cfg

    def test_preset_with_override(self, tmp_path):
        (tmp_path / "m.ini").write_text("[model]\npreset = tiny\nuse_adm = no\n")
        assert load_model_config(tmp_path / "m.ini") == TINY.ablate("adm")

    def test_unknown_key(self, tmp_path):
        (tmp_path / "m.ini").write_text("[model]\nlayers = 3\n")
        with pytest.raises(ValueError):
            load_model_config(tmp_path / "m.ini")
