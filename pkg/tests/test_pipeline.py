import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crydet.audio_io import CLIP_SAMPLES, AudioClip
from crydet.augment import AugmentPolicy
from crydet.errors import CheckpointError, DataError, NumericError
from crydet.model import PRESETS, CryDetector
from crydet.nn import load_checkpoint, save_checkpoint
from crydet.pipeline import (
    DatasetManifest,
    EarlyStopping,
    LabeledClip,
    ManifestEntry,
    MetricsReport,
    RunConfig,
    TrainConfig,
    build_manifest,
    confusion,
    detect_stream,
    evaluate,
    fit,
    invocations,
    load_run_config,
    save_run_config,
    snr_sweep_eval,
    stratified_kfold,
    summarize,
    train_model,
)
from crydet.pipeline.synthetic import filtered_noise, noise_pool, synthetic_dataset, tone_stack

TINY = PRESETS["tiny"]


@pytest.fixture(scope="module")
def tiny_items():
    return synthetic_dataset(12, seed=3)


class TestManifest:
    def _corpus(self, root, write):
        for i in range(3):
            write(root / "cry" / f"c{i}.wav", np.full(1600, 1000))
        for i in range(2):
            write(root / "speech" / f"s{i}.wav", np.full(3200, -1000))

    @pytest.fixture
    def corpus(self, tmp_path):
        from conftest import pcm_wav_bytes

        def write(path, frames):
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(pcm_wav_bytes(frames, 16000, 16))

        self._corpus(tmp_path, write)
        (tmp_path / "cry" / "notes.txt").write_text("not audio")
        (tmp_path / "cry" / "broken.wav").write_bytes(b"garbage")
        return tmp_path

    def test_counts(self, corpus):
        m = build_manifest(corpus, {"Cry": "cry/*", "Speech": "speech/*.wav"})
        assert len(m) == 5
        assert m.counts() == {"cry": 3, "non-cry": 2}
        assert {e.duration_s for e in m if e.subclass == "Speech"} == {0.2}

    def test_empty_directory(self, tmp_path):
        with pytest.raises(DataError, match="no samples"):
            build_manifest(tmp_path, {"Cry": "*.wav"})

    def test_duplicate_path(self, corpus):
        with pytest.raises(DataError):
            build_manifest(corpus, {"Cry": "cry/*.wav", "Household": "*/c0.wav"})

    def test_unknown_subclass(self, corpus):
        with pytest.raises(DataError):
            build_manifest(corpus, {"Dog": "*.wav"})

    def test_jsonl_roundtrip(self, corpus, tmp_path):
        m = build_manifest(corpus, {"Cry": "cry/*.wav", "Speech": "speech/*.wav"})
        m.to_jsonl(tmp_path / "m.jsonl")
        lines = (tmp_path / "m.jsonl").read_text().splitlines()
        assert len(lines) == 5 and set(json.loads(lines[0])) == {"path", "label", "subclass", "duration_s"}
        assert DatasetManifest.from_jsonl(tmp_path / "m.jsonl").entries == m.entries

    def test_inconsistent_label(self):
        with pytest.raises(DataError):
            DatasetManifest([ManifestEntry("a.wav", "cry", "Speech", 5.0)])


class TestFolds:
    def test_one_of_each_per_fold(self):
        folds = stratified_kfold(np.array([1] * 5 + [0] * 5), k=5, seed=0)
        for f in folds.folds:
            assert sorted(np.array([1] * 5 + [0] * 5)[f].tolist()) == [0, 1]

    def test_deterministic(self):
        y = np.array([0, 1] * 20)
        a, b = stratified_kfold(y, seed=4), stratified_kfold(y, seed=4)
        assert all(np.array_equal(x, z) for x, z in zip(a.folds, b.folds))

    def test_too_few(self):
        with pytest.raises(ValueError):
            stratified_kfold(np.array([0] * 10 + [1] * 4), k=5)

    @given(st.integers(5, 60), st.integers(5, 60), st.integers(2, 5), st.integers(0, 1000))
    def test_partition_laws(self, n_pos, n_neg, k, seed):
        y = np.array([1] * n_pos + [0] * n_neg)
        folds = stratified_kfold(y, k=k, seed=seed).folds
        union = np.concatenate(folds)
        assert len(union) == len(y) and len(np.unique(union)) == len(y)
        for f in folds:
            for cls, total in ((1, n_pos), (0, n_neg)):
                assert abs(np.sum(y[f] == cls) - total / k) < 1
            assert abs(len(f) - len(y) / k) < 1


class TestMetrics:
    def test_example(self):
        r = MetricsReport(tp=3, fp=1, fn=1, tn=5)
        assert (r.accuracy, r.precision, r.recall, r.f1) == (0.8, 0.75, 0.75, 0.75)

    def test_perfect(self):
        r = confusion([1, 0, 1, 0], [1, 0, 1, 0])
        assert (r.accuracy, r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0, 1.0)
        assert r.undefined == []

    def test_degenerate(self):
        r = confusion([0, 0, 0], [0, 0, 0])
        assert r.precision == 0 and r.recall == 0 and r.f1 == 0
        assert {"precision", "recall"} <= set(r.undefined)
        assert r.accuracy == 1.0

    def test_summary(self):
        s = summarize([MetricsReport(1, 0, 0, 1), MetricsReport(0, 0, 1, 1)])
        assert s["accuracy"] == {"mean": 0.75, "std": 0.25}

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), max_size=50))
    def test_recount(self, pairs):
        pred = [p for p, _ in pairs]
        lab = [y for _, y in pairs]
        r = confusion(pred, lab)
        assert r.tp + r.fp + r.fn + r.tn == len(pairs)
        assert r.tp == sum(p and y for p, y in pairs)
        assert r.tn == sum(not p and not y for p, y in pairs)


class TestEarlyStopping:
    def test_constant_score_patience_one(self):
        es = EarlyStopping(1)
        es.update(0.5)
        assert not es.should_stop
        es.update(0.5)
        assert es.should_stop and es.rounds == 2

    def test_strict_improvement_resets(self):
        es = EarlyStopping(2)
        for s in (0.1, 0.1, 0.2, 0.2):
            es.update(s)
        assert not es.should_stop
        es.update(0.15)
        assert es.should_stop

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(patience=0)
        with pytest.raises(ValueError):
            TrainConfig(base_lr=1e-2, max_lr=1e-3)


class TestTraining:
    def test_constant_validation_stops_after_two_rounds(self, tiny_items):
        cfg = TrainConfig(max_epochs=50, patience=1, batch_size=4, base_lr=0.0, max_lr=0.0)
        res = fit(CryDetector(TINY), tiny_items[:8], tiny_items[8:], cfg)
        assert len(res.history) == 2 and res.stopped_early
        assert res.history[0].val.f1 == res.history[1].val.f1

    def test_deterministic_checkpoints(self, tiny_items, tmp_path):
        cfg = TrainConfig(max_epochs=2, batch_size=4, base_lr=1e-3, max_lr=1e-2, cycle=10, seed=5)
        paths = []
        for run in range(2):
            model = CryDetector(TINY, seed=5)
            res = fit(model, tiny_items[:8], tiny_items[8:], cfg)
            paths.append(tmp_path / f"run{run}.ckpt")
            save_checkpoint(paths[-1], res.best_state, seed=5)
            if run == 0:
                first = res.losses
        assert res.losses == first
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_disabled_augmentation_gives_identical_batches(self, tiny_items):
        from crydet.pipeline import FeatureSource

        off = AugmentPolicy(p_speed=0.0, p_mask=0.0)
        a = FeatureSource(tiny_items, off).batch([0, 3, 5], epoch=2, dtype=np.float64)
        b = FeatureSource(tiny_items).batch([0, 3, 5], epoch=7, dtype=np.float64)
        assert a[0].tobytes() == b[0].tobytes()

    def test_nonfinite_loss(self, tiny_items):
        model = CryDetector(TINY)
        model.classifier.fc2.bias.data[:] = np.nan
        with pytest.raises(NumericError) as info:
            fit(model, tiny_items[:4], [], TrainConfig(max_epochs=1, batch_size=2))
        assert info.value.batch_info["batch"] == 0 and len(info.value.batch_info["items"]) == 2

    def test_best_not_worse_than_last(self, tiny_items):
        cfg = TrainConfig(max_epochs=4, patience=2, batch_size=4, base_lr=1e-3, max_lr=1e-2, cycle=8)
        res = fit(CryDetector(TINY), tiny_items[:8], tiny_items[8:], cfg)
        assert len(res.history) <= 4
        assert res.best_val_f1 >= res.history[-1].val.f1

    def test_max_batches(self, tiny_items):
        res = fit(CryDetector(TINY), tiny_items, [], TrainConfig(max_epochs=10, batch_size=4, max_batches=5))
        assert res.batches == 5 and all(np.isfinite(res.losses))

    def test_cross_validation(self, tmp_path):
        items = synthetic_dataset(10, seed=1)
        folds = stratified_kfold(np.array([it.target for it in items]), k=5, seed=0)
        cfg = TrainConfig(max_epochs=1, batch_size=4)
        res = train_model(items, folds, TINY, cfg, out_dir=tmp_path)
        assert len(res.fold_reports) == 5 and all(p.exists() for p in res.checkpoints)
        assert all(r.total == 2 for r in res.fold_reports)
        state, seed = load_checkpoint(res.checkpoints[0])
        assert seed == 0
        _, test_idx = folds.train_test(0)
        again = evaluate(res.checkpoints[0], [items[i] for i in test_idx], cfg=TINY)
        assert again == res.fold_reports[0]
        assert set(res.summary) == {"accuracy", "precision", "recall", "f1"}


class TestEvaluate:
    def test_incompatible_checkpoint(self, tmp_path, tiny_items):
        save_checkpoint(tmp_path / "c.ckpt", CryDetector(TINY).state_dict())
        with pytest.raises(CheckpointError):
            evaluate(tmp_path / "c.ckpt", tiny_items, cfg=PRESETS["small"])

    def test_threshold(self, tiny_items):
        model = CryDetector(TINY)
        everything = evaluate(model, tiny_items, threshold=0.0)
        nothing = evaluate(model, tiny_items, threshold=1.01)
        assert everything.fn == 0 and everything.tn == 0
        assert nothing.tp == 0 and nothing.fp == 0 and "precision" in nothing.undefined

    def test_sweep(self, tiny_items):
        model = CryDetector(TINY)
        pool = noise_pool(3, seconds=6.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = snr_sweep_eval(model, tiny_items, pool, seed=0)
        assert [s for s, _ in res] == [None, 0.0, -10.0, -20.0]
        assert res[0][1] == evaluate(model, tiny_items)


class TestStream:
    def counting(self, model):
        calls = []
        original = model.forward

        def forward(x):
            calls.append(1)
            return original(x)

        model.forward = forward
        return calls

    def test_silence(self):
        model = CryDetector(TINY)
        calls = self.counting(model)
        dets = detect_stream(AudioClip(np.zeros(20 * 16000), 16000), model)
        assert len(dets) == 7 and all(d.probability == 0 for d in dets) and not calls
        assert [d.start_s for d in dets] == [0, 2.5, 5, 7.5, 10, 12.5, 15]

    def test_exact_window(self):
        dets = detect_stream(AudioClip(np.zeros(CLIP_SAMPLES), 16000), CryDetector(TINY))
        assert len(dets) == 1

    def test_loud_window(self, rng):
        model = CryDetector(TINY)
        calls = self.counting(model)
        (d,) = detect_stream(tone_stack(rng), model)
        assert d.invoked and 0 <= d.probability <= 1 and len(calls) == 1

    def test_short_stream_tiled(self, rng):
        dets = detect_stream(AudioClip(filtered_noise(rng).samples[:30000], 16000), CryDetector(TINY))
        assert len(dets) == 1 and dets[0].invoked

    def test_wrong_rate(self):
        with pytest.raises(ValueError):
            detect_stream(AudioClip(np.zeros(100), 8000), CryDetector(TINY))

    @given(st.lists(st.booleans(), min_size=1, max_size=5))
    def test_invocations_match_loud_windows(self, loud):
        model = CryDetector(TINY)
        calls = self.counting(model)
        x = np.concatenate([np.full(40000, 0.5 if b else 0.0) for b in loud] + [np.zeros(40000)])
        dets = detect_stream(AudioClip(x, 16000), model)
        expected = sum(
            np.sqrt(np.mean(x[s : s + CLIP_SAMPLES] ** 2)) >= 10 ** (-40 / 20)
            for s in range(0, len(x) - CLIP_SAMPLES + 1, 40000)
        )
        assert len(calls) == invocations(dets) == expected


class TestRunConfig:
    def test_roundtrip(self, tmp_path):
        cfg = RunConfig(
            TINY.ablate("cca"),
            TrainConfig(patience=3, max_batches=9, policy=AugmentPolicy(p_scene=0.5, scene_snr_range=(-10.0, 0.0))),
        )
        save_run_config(tmp_path / "r.ini", cfg)
        back = load_run_config(tmp_path / "r.ini")
        assert back.model == cfg.model and back.train == cfg.train

    def test_partial_file(self, tmp_path):
        (tmp_path / "r.ini").write_text("[model]\npreset = small\n[train]\nbatch_size = 8\n[augment]\np_mask = 0.25\n")
        cfg = load_run_config(tmp_path / "r.ini")
        assert cfg.model == PRESETS["small"]
        assert cfg.train.batch_size == 8 and cfg.train.max_epochs == 200
        assert cfg.policy.p_mask == 0.25

    def test_unknown_section(self, tmp_path):
        (tmp_path / "r.ini").write_text("[optimizer]\nlr = 1\n")
        with pytest.raises(ValueError):
            load_run_config(tmp_path / "r.ini")


def test_synthetic_labels_alternate():
    items = synthetic_dataset(6)
    assert [it.target for it in items] == [1, 0, 1, 0, 1, 0]
    assert all(isinstance(it, LabeledClip) and len(it.clip) == CLIP_SAMPLES for it in items)
