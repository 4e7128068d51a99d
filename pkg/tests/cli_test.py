# Copyright 2026 The jax_ccfault Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import io
import json
import os
import sys
from unittest import mock

from absl.testing import absltest
from absl.testing import flagsaver
import pandas as pd

from jax_ccfault import artifacts
from jax_ccfault import cli

LENGTH = 40000
CONFIG = """
noise_scan=bin
k_phase=3
k_all=6
n_templates=3
n_sample=30
ensemble_seeds=1
folds=3
gbdt_num_trees=15
gbdt_learning_rate=0.3
gbdt_min_data_in_leaf=1
early_stopping_rounds=0
threads=1
"""
SCENARIO = """
seed=5
n_frames=12
faulty_fraction=0.5
length=40000
pd_count_min=30
pd_count_max=50
interference_count_min=10
interference_count_max=20
"""


def _run(*args):
  """Runs a command; returns (exit code, parsed stderr JSON lines)."""
  err = io.StringIO()
  with mock.patch.object(sys, "stderr", err):
    code = cli.execute(["ccfault", *args])
  lines = [json.loads(l) for l in err.getvalue().splitlines()
           if l.startswith("{")]
  return code, lines


class ErrorTest(absltest.TestCase):

  def test_unknown_command(self):
    code, lines = _run("bogus")
    self.assertEqual(code, 2)
    self.assertEqual(lines[0]["error"], "ConfigError")

  def test_missing_out(self):
    path = self.create_tempfile().full_path
    with flagsaver.flagsaver(out=None):
      code, lines = _run("import", path, path)
    self.assertEqual(code, 2)
    self.assertEqual(lines[0]["error"], "ConfigError")

  def test_bad_magic(self):
    path = self.create_tempfile(content="XXXX" + "\0" * 20).full_path
    out = os.path.join(self.create_tempdir().full_path, "p.csv")
    with flagsaver.flagsaver(out=out):
      code, lines = _run("detect", path)
    self.assertEqual(code, 2)
    self.assertEqual(lines[0]["error"], "BadMagic")

  def test_wrong_positional_count(self):
    code, lines = _run("train")
    self.assertEqual(code, 2)
    self.assertIn("usage", lines[0]["message"])

  def test_internal_error(self):
    def boom(args):
      raise RuntimeError("disk on fire")
    with mock.patch.dict(cli.COMMANDS, {"report": boom}):
      code, lines = _run("report")
    self.assertEqual(code, 1)
    self.assertEqual(lines[0], {"error": "Internal",
                                "message": "disk on fire",
                                "details": {"type": "RuntimeError"}})

  def test_unknown_cluster_action(self):
    path = self.create_tempfile().full_path
    code, lines = _run("cluster", "merge", path)
    self.assertEqual(code, 2)
    self.assertEqual(lines[0]["details"]["action"], "merge")


class WorkflowTest(absltest.TestCase):

  def test_full_run(self):
    d = self.create_tempdir().full_path
    p = lambda name: os.path.join(d, name)
    config = self.create_tempfile(content=CONFIG).full_path
    scenario = self.create_tempfile(content=SCENARIO).full_path
    log = p("run.jsonl")

    with flagsaver.flagsaver(config=config, length=LENGTH, run_log=log):
      with flagsaver.flagsaver(scenario=scenario, out=p("d.sigb"),
                               sidecar=p("truth.jsonl")):
        self.assertEqual(_run("synth"), (0, []))
      with flagsaver.flagsaver(out=p("aligned.sigb"),
                               sidecar=p("shifts.jsonl")):
        self.assertEqual(_run("preprocess", p("d.sigb")), (0, []))
      with open(p("shifts.jsonl")) as f:
        shifts = [json.loads(l) for l in f]
      self.assertLen(shifts, 12)
      self.assertLen(shifts[0]["noise_levels"], 3)

      with flagsaver.flagsaver(out=p("pulses.csv")):
        self.assertEqual(_run("detect", p("d.sigb")), (0, []))
      with flagsaver.flagsaver(out=p("pulses_aligned.csv"), aligned=True):
        self.assertEqual(_run("detect", p("aligned.sigb")), (0, []))
      pd.testing.assert_frame_equal(pd.read_csv(p("pulses.csv")),
                                    pd.read_csv(p("pulses_aligned.csv")))

      with flagsaver.flagsaver(out=p("bundle.ccfa"),
                               centroids_out=p("centroids.csv")):
        self.assertEqual(_run("cluster", "fit", p("d.sigb")), (0, []))
      self.assertLen(pd.read_csv(p("centroids.csv")), 6 + 3 * 3)
      with flagsaver.flagsaver(bundle=p("bundle.ccfa"),
                               out=p("assign.csv")):
        self.assertEqual(_run("cluster", "assign", p("d.sigb")), (0, []))
      with flagsaver.flagsaver(out=p("sse.csv"), k_list=["1", "2", "4"]):
        self.assertEqual(_run("cluster", "sweep", p("d.sigb")), (0, []))
      self.assertEqual(pd.read_csv(p("sse.csv"))["k"].tolist(), [1, 2, 4])

      with flagsaver.flagsaver(bundle=p("bundle.ccfa"),
                               out=p("segments.csv")):
        self.assertEqual(_run("segments", p("d.sigb")), (0, []))
      segments = pd.read_csv(p("segments.csv"))
      self.assertEqual(segments["frame_id"].nunique(), 12)
      with flagsaver.flagsaver(bundle=p("bundle.ccfa"),
                               out=p("features.csv")):
        self.assertEqual(_run("featurize", p("d.sigb")), (0, []))
      features = pd.read_csv(p("features.csv"))
      self.assertLen(features, 12)

      with flagsaver.flagsaver(out=p("model.ccfa"),
                               report_out=p("report.csv")):
        self.assertEqual(_run("train", p("features.csv")), (0, []))
      with open(p("model.ccfa.json")) as f:
        summary = json.load(f)
      self.assertEqual(summary["members"], 3)
      self.assertEqual(summary["variant"], "II")
      self.assertLess(summary["features"], len(features.columns) - 2)
      self.assertLen(pd.read_csv(p("report.csv")), 3)

      with flagsaver.flagsaver(model=p("model.ccfa"),
                               out=p("predictions.csv")):
        self.assertEqual(_run("predict", p("features.csv")), (0, []))
      predictions = pd.read_csv(p("predictions.csv"))
      self.assertEqual(list(predictions.columns),
                       ["frame_id", "probability", "faulty_pred",
                        "threshold", "faulty"])

      with flagsaver.flagsaver(out=p("metrics.json"), sweep=True,
                               sweep_out=p("sweep.csv")):
        self.assertEqual(_run("evaluate", p("predictions.csv")), (0, []))
      with open(p("metrics.json")) as f:
        result = json.load(f)
      self.assertEqual(result["n"], 12)
      self.assertIn("sweep_best_mcc", result)
      self.assertLen(pd.read_csv(p("sweep.csv")), 121)

      with flagsaver.flagsaver(model=p("model.ccfa"), out=p("gains.csv"),
                               groups_out=p("groups.csv")):
        self.assertEqual(_run("importance"), (0, []))
      self.assertContainsSubset(
          set(pd.read_csv(p("groups.csv"))["category"]),
          {"count", "height", "sd", "rmse"})
      with flagsaver.flagsaver(model=p("model.ccfa"), bundle=p("bundle.ccfa"),
                               out=p("traced.csv")):
        self.assertEqual(_run("importance"), (0, []))
      traced = pd.read_csv(p("traced.csv"))
      sources = artifacts.load_bundle(p("bundle.ccfa")).templates.sources()
      for feature, cluster in zip(traced["feature"], traced["source_cluster"]):
        self.assertEqual(cluster, sources.get(feature, -1), feature)
      self.assertNotIn("source_cluster", pd.read_csv(p("gains.csv")).columns)

      with flagsaver.flagsaver(out=p("summary.json")):
        self.assertEqual(_run("report"), (0, []))
    with open(p("summary.json")) as f:
      summary = json.load(f)
    self.assertEqual(summary["stages"]["featurize"]["runs"], 1)
    self.assertEqual(summary["stages"]["featurize"]["frames"], 12)
    self.assertIn("predict_seconds_per_frame", summary["latency"])

  def test_evaluate_with_label_join(self):
    d = self.create_tempdir().full_path
    preds = os.path.join(d, "p.csv")
    truth = os.path.join(d, "t.csv")
    out = os.path.join(d, "m.json")
    pd.DataFrame({"frame_id": ["a", "b", "c", "d"],
                  "probability": [0.9, 0.2, 0.7, 0.1],
                  "threshold": 0.5}).to_csv(preds, index=False)
    pd.DataFrame({"frame_id": ["d", "c", "b", "a"],
                  "faulty": [0, 0, 0, 1]}).to_csv(truth, index=False)
    with flagsaver.flagsaver(labels=truth, out=out):
      self.assertEqual(_run("evaluate", preds), (0, []))
    with open(out) as f:
      result = json.load(f)
    self.assertEqual((result["tp"], result["fp"], result["tn"], result["fn"]),
                     (1, 1, 2, 0))
    self.assertEqual(result["threshold"], 0.5)

  def test_evaluate_without_labels(self):
    d = self.create_tempdir().full_path
    preds = os.path.join(d, "p.csv")
    pd.DataFrame({"frame_id": ["a"], "probability": [0.9]}).to_csv(
        preds, index=False)
    with flagsaver.flagsaver(out=os.path.join(d, "m.json"), labels=None):
      code, lines = _run("evaluate", preds)
    self.assertEqual(code, 2)
    self.assertEqual(lines[0]["error"], "EmptyClass")


if __name__ == "__main__":
  absltest.main()
