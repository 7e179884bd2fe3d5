import numpy as np
import pytest

from qprobe.errors import ConfigError, DataError
from qprobe.evaluation import evaluate
from qprobe.report import emit_tables
from qprobe.runner import (
    ExperimentConfig,
    expected_row_count,
    load_results,
    make_splits,
    run_experiment,
)

import synth


class TestMakeSplits:
    def test_hundred_splits_70_15_15(self):
        splits = make_splits([f"s{i}" for i in range(100)], seed=1)
        assert (len(splits.train), len(splits.val), len(splits.test)) == (70, 15, 15)

    def test_ten_splits_7_1_2(self):
        splits = make_splits([f"s{i}" for i in range(10)], seed=1)
        assert (len(splits.train), len(splits.val), len(splits.test)) == (7, 1, 2)

    def test_same_seed_identical(self):
        ids = [f"s{i}" for i in range(37)]
        a = make_splits(ids, seed=42)
        b = make_splits(ids, seed=42)
        assert (a.train, a.val, a.test) == (b.train, b.val, b.test)

    def test_different_seed_differs(self):
        ids = [f"s{i}" for i in range(37)]
        assert make_splits(ids, seed=1).train != make_splits(ids, seed=2).train

    def test_partition_properties(self):
        ids = [f"s{i}" for i in range(53)]
        splits = make_splits(ids, seed=9)
        parts = [set(splits.train), set(splits.val), set(splits.test)]
        assert parts[0] | parts[1] | parts[2] == set(ids)
        assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])

    def test_stratified_keeps_global_sizes_and_class_balance(self):
        ids = [f"s{i}" for i in range(100)]
        labels = [i % 2 for i in range(100)]
        splits = make_splits(ids, seed=3, labels=labels)
        assert (len(splits.train), len(splits.val), len(splits.test)) == (70, 15, 15)
        label_of = dict(zip(ids, labels))
        train_ones = sum(label_of[i] for i in splits.train)
        assert train_ones == 35  # exactly proportional for balanced classes

    def test_stratified_deterministic(self):
        ids = [f"s{i}" for i in range(41)]
        labels = [i % 3 for i in range(41)]
        a = make_splits(ids, seed=5, labels=labels)
        b = make_splits(ids, seed=5, labels=labels)
        assert (a.train, a.val, a.test) == (b.train, b.val, b.test)

    def test_too_few_ids_rejected(self):
        with pytest.raises(DataError):
            make_splits(["a", "b"], seed=0)


class TestEvaluate:
    def test_perfect_predictions(self):
        assert evaluate([1, 0, 1], [1, 0, 1], "classification") == 100.0
        assert evaluate([0.5, 0.25], [0.5, 0.25], "regression") == 0.0

    def test_constant_mean_prediction_mse_is_variance(self):
        y = np.array([0.1, 0.5, 0.9, 0.3])
        predictions = np.full(4, y.mean())
        assert evaluate(predictions, y, "regression") == pytest.approx(np.var(y))

    def test_half_probabilities_threshold_to_one(self):
        y = np.array([0, 1, 0, 1, 1, 0])
        predictions = np.full(6, 0.5)
        assert evaluate(predictions, y, "classification") == pytest.approx(
            100.0 * np.mean(y == 1)
        )

    def test_length_mismatch_rejected(self):
        with pytest.raises(DataError):
            evaluate([1], [1, 0], "classification")


@pytest.fixture
def small_inputs(tmp_path):
    sentences = synth.make_corpus(["aaa", "bbb"], per_language=40, seed=7)
    corpus = synth.write_corpus(sentences, tmp_path / "corpus.jsonl")
    subwords = synth.write_subwords(sentences, tmp_path / "subwords.jsonl")
    embeddings = synth.write_embeddings(sentences, tmp_path / "emb.qemb", n_layers=3)
    return corpus, subwords, embeddings


def quick_config(tmp_path, corpus, subwords=None, embeddings=None, **overrides):
    defaults = dict(
        corpus_path=str(corpus),
        output_dir=str(tmp_path / "out"),
        languages=["aaa"],
        tasks=["question_type"],
        approaches=["dummy"],
        control_seeds=[11, 22, 33],
        subwords_path=str(subwords) if subwords else None,
        embeddings_path=str(embeddings) if embeddings else None,
        hyperparameters={"probe": {"hidden": [8], "max_epochs": 3}},
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestRunExperiment:
    def test_dummy_only_gives_four_rows(self, tmp_path, small_inputs):
        corpus, _, _ = small_inputs
        config = quick_config(tmp_path, corpus)
        results = run_experiment(config)
        assert len(results) == 4
        assert {r.variant for r in results} == {"real", "control-11", "control-22", "control-33"}

    def test_probe_rows_count(self, tmp_path, small_inputs):
        corpus, _, embeddings = small_inputs
        config = quick_config(
            tmp_path, corpus, embeddings=embeddings, approaches=["probe"]
        )
        results = run_experiment(config)
        assert len(results) == 3 * 4  # 3 layers x (1 real + 3 controls)
        assert expected_row_count(config, n_layers=3) == 12
        # full-scale arithmetic: 12 layers -> 48 probe rows
        assert expected_row_count(config, n_layers=12) == 48

    def test_rows_carry_selectivity(self, tmp_path, small_inputs):
        corpus, subwords, _ = small_inputs
        config = quick_config(tmp_path, corpus, subwords=subwords, approaches=["linear"])
        results = run_experiment(config)
        real = next(r for r in results if r.variant == "real")
        controls = [r for r in results if r.variant != "real"]
        assert real.s_bar is not None
        assert all(r.selectivity is not None for r in controls)
        expected = np.mean(
            [(real.metric - r.metric) / r.metric for r in controls]
        )
        assert real.s_bar == pytest.approx(expected)

    def test_rerun_is_byte_identical(self, tmp_path, small_inputs):
        corpus, subwords, embeddings = small_inputs
        outputs = {}
        for tag in ("first", "second"):
            config = quick_config(
                tmp_path,
                corpus,
                subwords=subwords,
                embeddings=embeddings,
                approaches=["dummy", "linear", "probe"],
                output_dir=str(tmp_path / tag),
            )
            results = run_experiment(config)
            paths = emit_tables(results, tmp_path / tag)
            outputs[tag] = [p.read_bytes() for p in paths]
        assert outputs["first"] == outputs["second"]

    def test_resume_after_partial_run_matches_full_run(self, tmp_path, small_inputs):
        corpus, subwords, _ = small_inputs
        config = quick_config(
            tmp_path,
            corpus,
            subwords=subwords,
            languages=["aaa", "bbb"],
            approaches=["dummy", "linear"],
            output_dir=str(tmp_path / "full"),
        )
        full = run_experiment(config)
        full_bytes = [p.read_bytes() for p in emit_tables(full, tmp_path / "full")]

        # simulate a crash: keep only the first persisted cell, then resume
        partial_dir = tmp_path / "partial"
        config_partial = quick_config(
            tmp_path,
            corpus,
            subwords=subwords,
            languages=["aaa", "bbb"],
            approaches=["dummy", "linear"],
            output_dir=str(partial_dir),
        )
        run_experiment(config_partial)
        results_file = partial_dir / "results.jsonl"
        lines = results_file.read_text().splitlines()
        results_file.write_text("\n".join(lines[:4]) + "\n")
        resumed = run_experiment(config_partial)
        resumed_bytes = [p.read_bytes() for p in emit_tables(resumed, partial_dir)]
        assert resumed_bytes == full_bytes

    def test_missing_corpus_rejected(self, tmp_path):
        config = quick_config(tmp_path, tmp_path / "nope.jsonl")
        with pytest.raises(ConfigError):
            run_experiment(config)

    def test_linear_requires_subwords(self, tmp_path, small_inputs):
        corpus, _, _ = small_inputs
        config = quick_config(tmp_path, corpus, approaches=["linear"])
        with pytest.raises(ConfigError):
            run_experiment(config)

    def test_unknown_language_rejected(self, tmp_path, small_inputs):
        corpus, _, _ = small_inputs
        config = quick_config(tmp_path, corpus, languages=["zzz"])
        with pytest.raises(ConfigError):
            run_experiment(config)

    def test_regression_task_uses_normalized_targets(self, tmp_path, small_inputs):
        corpus, _, _ = small_inputs
        config = quick_config(tmp_path, corpus, tasks=["combined_complexity"])
        results = run_experiment(config)
        real = next(r for r in results if r.variant == "real")
        assert real.metric is not None
        assert 0 <= real.metric <= 1  # dummy MSE on [0,1] targets

    def test_results_persisted_with_config_hash(self, tmp_path, small_inputs):
        corpus, _, _ = small_inputs
        config = quick_config(tmp_path, corpus)
        run_experiment(config)
        rows = load_results(
            tmp_path / "out" / "results.jsonl", config_hash=config.config_hash()
        )
        assert len(rows) == 4


class TestConfigFile:
    def test_round_trip_from_yaml(self, tmp_path, small_inputs):
        corpus, _, _ = small_inputs
        config_file = tmp_path / "config.yaml"
        config_file.write_text(
            "\n".join(
                [
                    f"corpus_path: {corpus}",
                    f"output_dir: {tmp_path / 'out'}",
                    "languages: [aaa]",
                    "tasks: [question_type]",
                    "approaches: [dummy]",
                    "control_seeds: [11, 22, 33]",
                ]
            )
        )
        config = ExperimentConfig.from_file(config_file)
        assert config.languages == ["aaa"]
        assert config.approaches == ["dummy"]

    def test_unknown_field_rejected(self, tmp_path):
        config_file = tmp_path / "config.yaml"
        config_file.write_text("corpus_path: x\noutput_dir: y\nbogus: 1\n")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(config_file)
