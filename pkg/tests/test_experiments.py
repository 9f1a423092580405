import copy
import json
from dataclasses import replace

import numpy as np
import pytest

from classifiers import model_from_dict, model_to_dict
from config import FAMILIES, ExperimentConfig, config_from_dict
from conftest import CHURN_DATA, fast_settings, needs_churn_data, synthetic_churn_frame
from data_model import STAYED, Dataset
from errors import ConfigError, ModelError
from experiments import (
    SEED_NAMES,
    TABLE_MEASURES,
    RunManifest,
    audit_manifest,
    check_partition,
    load_labelled,
    manifest_config,
    partition_settings,
    prepare_tables,
    run_model_comparison,
    run_suite,
    train_family,
)
from stats_eda import iqr_outliers

# --- Tests for stage data preparation ---


class TestPrepareTables:
    def test_default_modes(self, fast_config, churn_ds):
        data = prepare_tables(fast_config, churn_ds)
        assert data.train.n + data.test.n == churn_ds.n
        assert data.train.d == 11
        assert data.plan is None
        assert data.audit.train_rows == data.train.n

    def test_top5_with_smote(self, fast_config, churn_ds):
        cfg = fast_config.with_modes(feature_mode="top5", resample_mode="smote")
        data = prepare_tables(cfg, churn_ds)
        assert data.train.d == 6
        assert data.plan.kind == "smote"
        assert data.plan.seed == cfg.seed_for("smote")

    def test_outlier_drop_removes_stayed_age_outliers(self, fast_config, churn_ds):
        (report,) = [
            r for r in iqr_outliers(churn_ds, "Age", by_class=True) if r.class_label == STAYED
        ]
        data = prepare_tables(fast_config.with_modes(outlier_mode="drop"), churn_ds)
        assert data.dropped_rows == report.count
        assert data.train.n + data.test.n == churn_ds.n - report.count

    def test_same_split_in_every_stage(self, fast_config, churn_ds):
        a = prepare_tables(fast_config, churn_ds)
        b = prepare_tables(fast_config.with_modes(feature_mode="top5"), churn_ds)
        np.testing.assert_array_equal(a.test.row_ids, b.test.row_ids)

    def test_missing_data_path(self):
        with pytest.raises(ConfigError, match="no data path"):
            load_labelled(ExperimentConfig())


# --- Tests for test-split isolation ---


def scramble_rows(ds: Dataset, row_ids: np.ndarray, seed: int = 0) -> Dataset:
    """Same rows and outcomes, but every predictor of ``row_ids`` replaced."""
    rng = np.random.default_rng(seed)
    frame = ds.frame.copy()
    n = len(row_ids)
    frame.loc[row_ids, "CreditScore"] = rng.integers(350, 851, n)
    frame.loc[row_ids, "Geography"] = rng.choice(["France", "Germany", "Spain"], n)
    frame.loc[row_ids, "Gender"] = rng.choice(["Female", "Male"], n)
    frame.loc[row_ids, "Age"] = rng.integers(18, 93, n)
    frame.loc[row_ids, "Tenure"] = rng.integers(0, 11, n)
    frame.loc[row_ids, "Balance"] = np.round(rng.uniform(0.0, 250000.0, n), 2)
    frame.loc[row_ids, "NumOfProducts"] = rng.integers(1, 5, n)
    frame.loc[row_ids, "HasCrCard"] = rng.integers(0, 2, n)
    frame.loc[row_ids, "IsActiveMember"] = rng.integers(0, 2, n)
    frame.loc[row_ids, "EstimatedSalary"] = np.round(rng.uniform(10.0, 200000.0, n), 2)
    return Dataset(frame, ds.schema)


class TestTestSplitIsolation:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_test_values_never_reach_the_model(self, fast_config, churn_ds, family):
        data = prepare_tables(fast_config, churn_ds)
        scrambled = scramble_rows(churn_ds, data.test.row_ids)
        other = prepare_tables(fast_config, scrambled)
        np.testing.assert_array_equal(other.train.values, data.train.values)
        assert not np.array_equal(other.test.values, data.test.values)

        a = train_family(fast_config, family, data, family, "compare")
        b = train_family(fast_config, family, other, family, "compare")
        assert b.params == a.params
        assert model_to_dict(b.model) == model_to_dict(a.model)
        assert b.train.to_dict() == a.train.to_dict()

    def test_smote_and_scaling_use_training_rows_only(self, fast_config, churn_ds):
        cfg = fast_config.with_modes(resample_mode="smote")
        data = prepare_tables(cfg, churn_ds)
        other = prepare_tables(cfg, scramble_rows(churn_ds, data.test.row_ids, seed=1))
        a = train_family(cfg, "knn", data, "knn", "balance")
        b = train_family(cfg, "knn", other, "knn", "balance")
        assert model_to_dict(b.model) == model_to_dict(a.model)


# --- Tests for the partition record ---


class TestPartitionRecord:
    @pytest.fixture
    def outcome(self, fast_config, churn_ds):
        data = prepare_tables(fast_config, churn_ds)
        return train_family(fast_config, "gnb", data, "gnb", "compare")

    def test_saved_model_keeps_its_partition(self, fast_config, outcome):
        assert outcome.model.partition == partition_settings(fast_config)
        restored = model_from_dict(json.loads(json.dumps(model_to_dict(outcome.model))))
        assert restored.partition == outcome.model.partition
        check_partition(restored, fast_config)

    @pytest.mark.parametrize(
        ("modes", "setting"),
        [({"seed": 99}, "split_seed"), ({"outlier_mode": "drop"}, "outlier_mode")],
    )
    def test_mismatch_is_refused(self, fast_config, outcome, modes, setting):
        with pytest.raises(ModelError, match=setting):
            check_partition(outcome.model, replace(fast_config, **modes))

    def test_feature_mode_is_not_part_of_the_partition(self, fast_config):
        top5 = fast_config.with_modes(feature_mode="top5")
        assert partition_settings(top5) == partition_settings(fast_config)

    def test_unrecorded_partition_is_accepted(self, fast_config, outcome):
        check_partition(replace(outcome.model, partition=None), replace(fast_config, seed=99))


# --- Tests for the model comparison stage ---


class TestModelComparison:
    def test_tables_have_a_column_per_family(self, compare_run):
        _, result = compare_run
        tables = {t.name: t for t in result.manifest.tables}
        for name in ("table3", "table4"):
            assert tables[name].header == ("measure", *FAMILIES)
            assert [row[0] for row in tables[name].rows] == list(TABLE_MEASURES)
        assert {"table1", "table2", "chi_square", "outliers"} <= set(tables)

    def test_test_table_matches_model_reports(self, compare_run):
        _, result = compare_run
        stage = result.manifest.stages["compare"]
        table4 = next(t for t in result.manifest.tables if t.name == "table4")
        accuracy = dict(zip(table4.header, table4.rows[1], strict=True))
        for family in FAMILIES:
            assert accuracy[family] == stage["models"][family]["test"]["metrics"]["accuracy"]

    def test_models_are_keyed_by_stage(self, compare_run):
        _, result = compare_run
        assert set(result.models) == {f"compare-{f}" for f in FAMILIES}

    def test_leakage_audit_recorded(self, compare_run):
        _, result = compare_run
        leakage = result.manifest.stages["compare"]["extras"]["leakage"]
        assert leakage["train_rows"] + leakage["test_rows"] == 400

    def test_independent_of_worker_count(self, compare_run):
        cfg, result = compare_run
        settings = fast_settings(cfg.data_path, cfg.out_dir, threads=2)
        again = run_model_comparison(config_from_dict(settings))
        assert again.to_dict() == result.manifest.stages["compare"]


# --- Tests for the manifest ---


class TestManifest:
    def test_config_echo_skips_execution_settings(self, compare_run):
        cfg, result = compare_run
        assert "threads" not in result.manifest.config
        assert "out_dir" not in result.manifest.config
        assert result.manifest.config == manifest_config(cfg)
        assert set(result.manifest.seeds) == set(SEED_NAMES)

    def test_audit_passes(self, compare_run):
        _, result = compare_run
        audit = audit_manifest(result.manifest)
        assert audit.ok
        assert audit.checked > 6 * 2 * 5

    def test_audit_catches_tampering(self, compare_run):
        _, result = compare_run
        data = copy.deepcopy(result.manifest.to_dict())
        metrics = data["stages"]["compare"]["models"]["knn"]["test"]["metrics"]
        metrics["accuracy"] += 0.01
        audit = audit_manifest(RunManifest.from_dict(data))
        assert audit.mismatches == ["compare/knn test accuracy"]

    def test_unknown_stage(self, fast_config):
        with pytest.raises(ConfigError, match="unknown stage"):
            run_suite(fast_config, ["compare", "deploy"])


# --- Tests for the full suite ---


class TestFullSuite:
    @pytest.fixture(scope="class")
    def full_run(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("full")
        path = root / "churn.csv"
        synthetic_churn_frame().to_csv(path, index=False)
        return run_suite(config_from_dict(fast_settings(path, root / "run")))

    def test_every_table(self, full_run):
        names = {t.name for t in full_run.manifest.tables}
        assert {f"table{i}" for i in range(1, 12)} <= names
        assert {"rfe", "four_variables"} <= names

    def test_balance_tables_carry_roc(self, full_run):
        table9 = next(t for t in full_run.manifest.tables if t.name == "table9")
        assert table9.header[1:] == (
            "rf_initial",
            "rf_under",
            "rf_smote",
            "ann_initial",
            "ann_under",
            "ann_smote",
        )
        assert table9.rows[-1][0] == "roc_auc"
        assert all(v is not None for v in table9.rows[-1][1:])

    def test_stages_hand_models_forward(self, full_run):
        stages = full_run.manifest.stages
        assert (
            stages["balance"]["models"]["rf_initial"]["predictions"]
            == stages["select"]["models"]["rf_selected"]["predictions"]
        )
        assert (
            stages["outliers"]["models"]["ann_initial"]["predictions"]
            == stages["balance"]["models"]["ann_smote"]["predictions"]
        )

    def test_selection_extras(self, full_run):
        extras = full_run.manifest.stages["select"]["extras"]
        assert extras["top5"] == ["Age", "NumOfProducts", "IsActiveMember", "Balance", "Geography"]
        assert extras["rfe"]["sizes"] == [2, 5, 10]

    def test_outlier_extras(self, full_run):
        extras = full_run.manifest.stages["outliers"]["extras"]
        assert extras["rows_after"] + extras["dropped_rows"] == 400

    def test_audit_passes(self, full_run):
        assert audit_manifest(full_run.manifest).ok

    def test_timings_cover_each_stage(self, full_run):
        assert set(full_run.timings) == {"profile", "compare", "select", "balance", "outliers"}


# --- Acceptance on the public data ---


@pytest.mark.slow
@needs_churn_data
class TestPublicChurnComparison:
    TEST_KAPPA = {
        "gnb": (0.310, 0.06),
        "knn": (0.257, 0.06),
        "svm": (0.488, 0.08),
        "cart": (0.492, 0.06),
        "rf": (0.512, 0.06),
        "ann": (0.514, 0.06),
    }

    @pytest.fixture(scope="class")
    def comparison(self):
        cfg = config_from_dict(
            {"run": {"data_path": CHURN_DATA, "threads": 0}, "cv": {"folds": 5, "repeats": 1}}
        )
        return run_model_comparison(cfg)

    def test_test_kappa_per_family(self, comparison):
        for family, (target, tolerance) in self.TEST_KAPPA.items():
            kappa = comparison.models[family].test.metrics.kappa
            assert kappa == pytest.approx(target, abs=tolerance), family

    def test_forest_overfits_the_training_split(self, comparison):
        rf = comparison.models["rf"]
        assert rf.train.metrics.kappa >= 0.99
        assert rf.train.metrics.kappa - rf.test.metrics.kappa >= 0.3

    def test_network_accuracy(self, comparison):
        assert comparison.models["ann"].test.metrics.accuracy == pytest.approx(0.867, abs=0.015)
