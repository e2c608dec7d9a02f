"""Artifact emission: cell formatting, CSV/JSON writers, manifests, SVG."""

import json
import math
import os
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from attncond.model import ModelConfig
from attncond.probe import ConditioningReport, LayerConditioning
from attncond.randmat import KappaStats
from attncond.reporting import (
    canonical_json,
    conditioning_csv,
    csv_text,
    format_cell,
    grid_csv,
    grid_summary,
    make_manifest,
    metrics_csv,
    run_summary,
    svg_line_chart,
    theory_csv,
    write_atomic,
)
from attncond.tasks import TaskSpec
from attncond.training import GridRow, RunResult, TrainConfig


def small_result(loss_curve=(0.5, 0.25), lr_curve=(0.0005, 0.001),
                 conditioning=()):
    config = ModelConfig(depth=1, num_heads=2, head_dim=4, embed_dim=8,
                         mlp_ratio=2.0, vocab_size=4, seq_len=5, num_classes=3)
    task = TaskSpec(kind="seq_sum_mod", vocab_size=4, seq_len=5, modulus=3,
                    train_size=64, eval_size=32, seed=0)
    tc = TrainConfig(steps=len(loss_curve), batch_size=8, warmup_steps=2)
    return RunResult(
        final_train_loss=loss_curve[-1] if loss_curve else float("nan"),
        final_eval_accuracy=0.5,
        loss_curve=tuple(loss_curve),
        lr_curve=tuple(lr_curve),
        conditioning=tuple(conditioning),
        param_count=691,
        model_config=config,
        task=task,
        train_config=tc,
        probe_metadata={"probing": False},
    )


def small_report(step=0, kappa=3.0):
    layer = LayerConditioning(layer=0, per_head_kappa=(2.0, 4.0), concat_kappa=kappa)
    return ConditioningReport(
        step=step, per_layer=(layer,),
        mean_concat_kappa_across_layers=kappa,
        batch_size_measured=8, rank_deficient_heads=0, rank_deficient_concat=0,
    )


class TestFormatCell:
    def test_int_plain(self):
        assert format_cell(3) == "3"
        assert format_cell(np.int64(-17)) == "-17"

    def test_float_repr(self):
        assert format_cell(0.1) == "0.1"
        assert format_cell(1.0) == "1.0"
        assert format_cell(np.float64(2.5)) == "2.5"

    def test_nonfinite(self):
        assert format_cell(float("inf")) == "inf"
        assert format_cell(float("-inf")) == "-inf"
        assert format_cell(float("nan")) == "nan"

    def test_bool_lowercase(self):
        assert format_cell(True) == "true"
        assert format_cell(False) == "false"

    def test_str_passthrough(self):
        assert format_cell("a,b") == "a,b"

    def test_unsupported_type(self):
        with pytest.raises(TypeError):
            format_cell(object())

    def test_repr_round_trips(self):
        # the parse-back contract: float(cell) recovers the value exactly
        rng = np.random.default_rng(0)
        for value in rng.standard_normal(50):
            assert float(format_cell(float(value))) == float(value)


class TestCsvText:
    def test_frozen_small_table(self):
        text = csv_text(["a", "b"], [(1, 0.5), (2, float("inf"))])
        assert text == "a,b\n1,0.5\n2,inf\n"

    def test_quoting_only_when_needed(self):
        text = csv_text(["name", "v"], [("x,y", 1)])
        assert text == 'name,v\n"x,y",1\n'

    def test_lf_endings_no_trailing_blank(self):
        text = csv_text(["a"], [(1,), (2,)])
        assert "\r" not in text
        assert text.endswith("2\n")
        assert not text.endswith("\n\n")


class TestWriteAtomic:
    def test_writes_and_overwrites(self, tmp_path):
        target = tmp_path / "x.csv"
        write_atomic(target, "one\n")
        assert target.read_text() == "one\n"
        write_atomic(target, "two\n")
        assert target.read_text() == "two\n"

    def test_no_temp_leftovers(self, tmp_path):
        write_atomic(tmp_path / "y.csv", "data\n")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["y.csv"]

    def test_creates_parent_dirs(self, tmp_path):
        target = tmp_path / "deep" / "nested" / "z.txt"
        write_atomic(target, "ok")
        assert target.read_text() == "ok"


class TestCanonicalJson:
    def test_sorted_keys_and_trailing_newline(self):
        text = canonical_json({"b": 1, "a": 2})
        assert text == '{\n  "a": 2,\n  "b": 1\n}\n'

    def test_nonfinite_floats_become_strings(self):
        loaded = json.loads(canonical_json({"k": float("inf"), "n": float("nan")}))
        assert loaded == {"k": "inf", "n": "nan"}

    def test_numpy_scalars_unwrap(self):
        text = canonical_json({"i": np.int32(3), "f": np.float64(0.5),
                               "b": np.bool_(True), "t": (1, 2)})
        assert json.loads(text) == {"i": 3, "f": 0.5, "b": True, "t": [1, 2]}

    def test_deterministic(self):
        payload = {"z": [1.5, float("inf")], "a": {"nested": 0.1}}
        assert canonical_json(payload) == canonical_json(payload)


class TestManifest:
    def test_fields_and_sorted_outputs(self):
        manifest = make_manifest("theory", {"N": 8}, {"seed": 1},
                                 ["b.csv", "a.json"], "t0", "t1")
        assert manifest["command"] == "theory"
        assert manifest["config"] == {"N": 8}
        assert manifest["seeds"] == {"seed": 1}
        assert manifest["outputs"] == ["a.json", "b.csv"]
        assert manifest["started_at"] == "t0"
        assert manifest["finished_at"] == "t1"
        assert manifest["version"]


class TestTheoryCsv:
    def test_frozen_rows(self):
        stats = [
            KappaStats(h=2, D=16, trials=3, mean_kappa=4.5, std_kappa=0.25,
                       min_kappa=4.0, max_kappa=5.0, asymptotic_kappa=3.0,
                       rank_deficient_count=0),
            KappaStats(h=4, D=32, trials=3, mean_kappa=float("inf"),
                       std_kappa=float("nan"), min_kappa=float("nan"),
                       max_kappa=float("nan"), asymptotic_kappa=2.0,
                       rank_deficient_count=3),
        ]
        assert theory_csv(stats) == (
            "h,D,trials,mean_kappa,std_kappa,min,max,asymptotic_kappa,rank_deficient\n"
            "2,16,3,4.5,0.25,4.0,5.0,3.0,0\n"
            "4,32,3,inf,nan,nan,nan,2.0,3\n"
        )


class TestMetricsCsv:
    def test_one_based_steps(self):
        text = metrics_csv(small_result(loss_curve=(0.5, 0.25),
                                        lr_curve=(0.0005, 0.001)))
        assert text == "step,loss,lr\n1,0.5,0.0005\n2,0.25,0.001\n"

    def test_empty_run_header_only(self):
        text = metrics_csv(small_result(loss_curve=(), lr_curve=()))
        assert text == "step,loss,lr\n"


class TestConditioningCsv:
    def test_one_row_per_head(self):
        report = small_report(step=5, kappa=3.5)
        text = conditioning_csv((report,))
        assert text == (
            "step,layer,head,kappa,concat_kappa,"
            "mean_concat_kappa_across_layers,rank_deficient_heads\n"
            "5,0,0,2.0,3.5,3.5,0\n"
            "5,0,1,4.0,3.5,3.5,0\n"
        )

    def test_empty_reports_header_only(self):
        text = conditioning_csv(())
        assert text.count("\n") == 1
        assert text.startswith("step,layer,head,")

    def test_infinite_kappa_renders_inf(self):
        layer = LayerConditioning(layer=0, per_head_kappa=(float("inf"),),
                                  concat_kappa=float("inf"))
        report = ConditioningReport(
            step=0, per_layer=(layer,),
            mean_concat_kappa_across_layers=float("inf"),
            batch_size_measured=4, rank_deficient_heads=4,
            rank_deficient_concat=4,
        )
        assert "0,0,0,inf,inf,inf,4\n" in conditioning_csv((report,))


class TestGridCsv:
    def test_frozen_rows(self):
        rows = [GridRow(depth=2, heads=4, params=1000, mean_acc=0.75,
                        std_acc=0.05, final_mean_kappa=12.5,
                        accuracies=(0.7, 0.8), kappas=(12.0, 13.0),
                        failed_runs=0)]
        assert grid_csv(rows) == (
            "depth,heads,params,mean_acc,std_acc,final_mean_kappa\n"
            "2,4,1000,0.75,0.05,12.5\n"
        )


class TestRunSummary:
    def test_nan_kappa_without_probes(self):
        summary = run_summary(small_result())
        assert math.isnan(summary["final_mean_kappa"])
        assert summary["param_count"] == 691
        assert summary["steps"] == 2
        assert set(summary["config"]) == {"model", "task", "train"}

    def test_kappa_from_last_report(self):
        result = small_result(conditioning=(small_report(0, 9.0),
                                            small_report(2, 4.0)))
        assert run_summary(result)["final_mean_kappa"] == 4.0

    def test_json_serializable_with_nan(self):
        parsed = json.loads(canonical_json(run_summary(small_result())))
        assert parsed["final_mean_kappa"] == "nan"


class TestGridSummary:
    def test_cells_structure(self):
        rows = [GridRow(depth=1, heads=2, params=10, mean_acc=0.5, std_acc=0.0,
                        final_mean_kappa=float("nan"), accuracies=(0.5,),
                        kappas=(), failed_runs=1)]
        summary = grid_summary(rows, {"reps": 2})
        cell = summary["cells"][0]
        assert cell["depth"] == 1 and cell["heads"] == 2
        assert cell["accuracies"] == [0.5]
        assert cell["failed_runs"] == 1
        assert summary["config"] == {"reps": 2}


class TestSvgLineChart:
    def chart(self, points):
        return svg_line_chart(points, title="t", x_label="x", y_label="y")

    def test_valid_xml(self):
        svg = self.chart([(1, 0.5), (2, 0.25), (3, 0.125)])
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")

    def test_data_attributes_exact(self):
        svg = self.chart([(1, 0.5), (2, 0.25)])
        pairs = re.findall(r'data-x="([^"]*)" data-y="([^"]*)"', svg)
        assert pairs == [("1", "0.5"), ("2", "0.25")]

    def test_nonfinite_points_skipped(self):
        svg = self.chart([(1, float("inf")), (2, 0.5), (3, float("nan"))])
        pairs = re.findall(r'data-x="([^"]*)" data-y="([^"]*)"', svg)
        assert pairs == [("2", "0.5")]

    def test_all_nonfinite_fallback(self):
        svg = self.chart([(1, float("inf"))])
        assert "no finite data" in svg
        assert "circle" not in svg

    def test_empty_points_fallback(self):
        assert "no finite data" in self.chart([])

    def test_y_range_label(self):
        svg = self.chart([(0, 2.0), (1, 8.0)])
        assert "y: 2.0 .. 8.0" in svg

    def test_constant_series_padded_range(self):
        svg = self.chart([(0, 3.0), (1, 3.0)])
        assert "y: 2.5 .. 3.5" in svg

    def test_single_point_no_polyline(self):
        svg = self.chart([(5, 1.5)])
        assert "polyline" not in svg
        assert 'data-y="1.5"' in svg

    def test_deterministic(self):
        points = [(i, float(i) / 7) for i in range(10)]
        assert self.chart(points) == self.chart(points)
