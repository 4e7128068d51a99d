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

"""End-to-end benchmark of the fault detector on synthetic frames.

Trains on one synthetic scenario, scores a held-out one and reports MCC,
wall time and per-frame latency; a check FAILs when MCC or either latency
misses its gate. With --dataset_metadata and --dataset_samples it also runs
an 80/20 split of the competition layout, otherwise that check reports SKIP.
"""
import dataclasses
import json
import time
from typing import Any, Dict, List, Sequence

from absl import app
from absl import flags
from absl import logging
import numpy as np

import jax_ccfault  # pylint: disable=unused-import
from jax_ccfault import core
from jax_ccfault import metrics
from jax_ccfault import pipeline
from jax_ccfault.data import columnar
from jax_ccfault.data import synth
from jax_ccfault.model import ensemble as ensemble_lib

FLAGS = flags.FLAGS

flags.DEFINE_integer("train_frames", 500, "Synthetic training frames.")
flags.DEFINE_integer("test_frames", 200, "Held-out synthetic frames.")
flags.DEFINE_float("faulty_fraction", 0.1, "Share of faulty frames.")
flags.DEFINE_integer("seed", 0, "Scenario seed; the test set uses seed + 1.")
flags.DEFINE_integer("seeds", 5, "Ensemble seeds.")
flags.DEFINE_integer("folds", 5, "Cross-validation folds.")
flags.DEFINE_integer("threads", 0, "Worker threads; 0 uses every core.")
flags.DEFINE_float("min_mcc", 0.90, "Synthetic held-out MCC gate.")
flags.DEFINE_float("min_dataset_mcc", 0.70, "Competition split MCC gate.")
flags.DEFINE_float("max_featurize_seconds", metrics.MAX_FEATURIZE_SECONDS,
                   "Single-thread featurization gate per frame.")
flags.DEFINE_float("max_predict_seconds", metrics.MAX_PREDICT_SECONDS,
                   "Single-row inference gate per frame.")
flags.DEFINE_string("dataset_metadata", None, "Competition metadata CSV.")
flags.DEFINE_string("dataset_samples", None, "Competition samples file.")
flags.DEFINE_string("out", None, "Optional JSON result path.")


def _fit_and_score(train: Sequence[core.SignalFrame],
                   test: Sequence[core.SignalFrame],
                   cfg: core.PipelineConfig) -> Dict[str, Any]:
  start = time.perf_counter()
  analyses = pipeline.analyze(train, cfg)
  bundle = pipeline.fit_clusters(analyses, cfg)
  x_train = np.stack([v.values for v in pipeline.featurize(train, bundle, cfg)])
  y_train = np.array([f.faulty for f in train], dtype=bool)
  model = ensemble_lib.train_ensemble(x_train, y_train, bundle.manifest, cfg,
                                      variant="II", seeds=FLAGS.seeds,
                                      folds=FLAGS.folds)
  fit_seconds = time.perf_counter() - start

  single = dataclasses.replace(cfg, threads=1)
  pipeline.featurize_frame(test[0], bundle, single)
  start = time.perf_counter()
  vectors = [pipeline.featurize_frame(f, bundle, single)[0] for f in test]
  featurize_seconds = (time.perf_counter() - start) / len(test)
  x_test = np.stack([v.values for v in vectors])
  ensemble_lib.predict(model, bundle.manifest, x_test[:1])
  start = time.perf_counter()
  for row in x_test:
    ensemble_lib.predict(model, bundle.manifest, row[None, :])
  predict_seconds = (time.perf_counter() - start) / len(test)

  p, _ = ensemble_lib.predict(model, bundle.manifest, x_test)
  y_test = np.array([f.faulty for f in test], dtype=bool)
  result = metrics.evaluate(p, y_test, model.threshold)
  result.update(fit_seconds=fit_seconds,
                featurize_seconds_per_frame=featurize_seconds,
                predict_seconds_per_frame=predict_seconds,
                pooled_valid_mcc=model.valid_mcc)
  return result


def _status(result: Dict[str, Any], min_mcc: float) -> Dict[str, Any]:
  failed = metrics.gate(result, min_mcc, FLAGS.max_featurize_seconds,
                        FLAGS.max_predict_seconds)
  result.update(status="FAIL" if failed else "PASS", failed_gates=failed)
  return result


def synthetic_check(cfg: core.PipelineConfig) -> Dict[str, Any]:
  scenario = synth.SynthScenario(seed=FLAGS.seed, n_frames=FLAGS.train_frames,
                                 faulty_fraction=FLAGS.faulty_fraction)
  train = [f for f, _ in synth.generate(scenario)]
  test = [f for f, _ in synth.generate(dataclasses.replace(
      scenario, seed=FLAGS.seed + 1, n_frames=FLAGS.test_frames))]
  start = time.perf_counter()
  result = _fit_and_score(train, test, cfg)
  result["wall_seconds"] = time.perf_counter() - start
  return _status(result, FLAGS.min_mcc)


def dataset_check(cfg: core.PipelineConfig) -> Dict[str, Any]:
  if not (FLAGS.dataset_metadata and FLAGS.dataset_samples):
    return {"status": "SKIP", "reason": "no dataset supplied"}
  frames: List[core.SignalFrame] = [
      f for f in columnar.iter_columnar(FLAGS.dataset_metadata,
                                        FLAGS.dataset_samples)
      if f.faulty is not None]
  order = np.random.default_rng(FLAGS.seed).permutation(len(frames))
  cut = int(round(0.8 * len(frames)))
  train = [frames[i] for i in order[:cut]]
  test = [frames[i] for i in order[cut:]]
  result = _fit_and_score(train, test, cfg)
  return _status(result, FLAGS.min_dataset_mcc)


def main(argv: Sequence[str]) -> int:
  if len(argv) > 1:
    raise app.UsageError("Too many command-line arguments.")
  cfg = core.load_config(overrides={"threads": FLAGS.threads})
  results = {"synthetic": synthetic_check(cfg),
             "dataset": dataset_check(cfg)}
  for name, result in results.items():
    logging.info("%s: %s", name, result)
  text = json.dumps(results, sort_keys=True, indent=2, default=float)
  if FLAGS.out:
    with open(FLAGS.out, "w") as f:
      f.write(text + "\n")
  print(text)
  return int(any(r["status"] == "FAIL" for r in results.values()))


if __name__ == "__main__":
  app.run(main)
