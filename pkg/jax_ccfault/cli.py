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

"""Command line interface of the fault detection pipeline.

  ccfault import META.csv SAMPLES --out data.sigb
  ccfault synth --scenario scenario.txt --out data.sigb --sidecar truth.jsonl
  ccfault preprocess data.sigb --out aligned.sigb
  ccfault detect data.sigb --out pulses.csv
  ccfault cluster fit|assign|sweep data.sigb ...
  ccfault featurize data.sigb --bundle clusters.ccfa --out features.csv
  ccfault segments data.sigb --bundle clusters.ccfa --out segments.csv
  ccfault train features.csv --variant II --out model.ccfa
  ccfault predict features.csv --model model.ccfa --out predictions.csv
  ccfault evaluate predictions.csv --sweep --out metrics.json
  ccfault importance --model model.ccfa [--bundle clusters.ccfa] --out gains.csv
  ccfault report --run_log run.jsonl --out summary.json

Errors are printed to stderr as one JSON object; the exit code is 2 for
pipeline errors and 1 for anything else.
"""
import contextlib
import dataclasses
import json
import os
import sys
import time

from typing import Any, Callable, Dict, List, Sequence

from absl import app
from absl import flags
from absl import logging

import numpy as np
import pandas as pd

from jax_ccfault import artifacts
from jax_ccfault import clustering
from jax_ccfault import core
from jax_ccfault import errors
from jax_ccfault import features
from jax_ccfault import metrics
from jax_ccfault import pipeline
from jax_ccfault import preprocess
from jax_ccfault import pulses as pulses_lib
from jax_ccfault.data import columnar
from jax_ccfault.data import sigb
from jax_ccfault.data import synth
from jax_ccfault.model import ensemble as ensemble_lib

FLAGS = flags.FLAGS

flags.DEFINE_string("config", None,
                    "key=value config file; defaults to $CCFAULT_CONFIG.")
flags.DEFINE_integer("seed", None, "Overrides the configured seed.")
flags.DEFINE_integer("threads", None, "Worker threads; 0 uses every core.")
flags.DEFINE_string("run_log", None,
                    "JSON-lines file every stage appends its timing to.")
flags.DEFINE_integer("length", core.SAMPLES_PER_CYCLE, "Samples per phase.")
flags.DEFINE_bool("aligned", False,
                  "Input frames were phase-corrected by `preprocess`.")
flags.DEFINE_string("out", None, "Output path.")
flags.DEFINE_string("sidecar", None, "JSON-lines sidecar path.")
flags.DEFINE_string("bundle", None, "Cluster bundle artifact.")
flags.DEFINE_string("model", None, "Ensemble artifact.")
flags.DEFINE_enum("variant", None, ["I", "II", "III"], "Training variant.")
flags.DEFINE_float("alpha", None, "Oversampling ratio for variant III.")
flags.DEFINE_integer("seeds", None, "Ensemble seeds.")
flags.DEFINE_integer("folds", None, "Cross-validation folds.")
flags.DEFINE_enum("feature_set", None, ["full", "all_pulse", "cluster"],
                  "Feature group ablation.")
flags.DEFINE_enum("probability_mode", None, ["margin", "probability"],
                  "How member outputs are averaged.")
flags.DEFINE_string("report_out", None, "Cross-validation report CSV.")
flags.DEFINE_bool("sweep", False, "Also sweep the decision threshold.")
flags.DEFINE_string("sweep_out", None, "Threshold sweep CSV.")
flags.DEFINE_float("threshold", None, "Overrides the decision threshold.")
flags.DEFINE_string("labels", None, "CSV with frame_id and faulty columns.")
flags.DEFINE_string("scenario", None, "Synthetic scenario key=value file.")
flags.DEFINE_list("k_list", [str(k) for k in range(2, 21)],
                  "Cluster counts of the SSE curve.")
flags.DEFINE_list("k_pairs", [],
                  "k_phase:k_all pairs for the cluster-count study.")
flags.DEFINE_integer("trials", 3, "Pulse re-samplings per k pair.")
flags.DEFINE_string("study_out", None, "Cluster-count study CSV.")
flags.DEFINE_string("centroids_out", None, "Centroid CSV.")
flags.DEFINE_string("groups_out", None, "Per-group importance CSV.")

PROBABILITY_COLUMN = "probability"
DECISION_COLUMN = "faulty_pred"
THRESHOLD_COLUMN = "threshold"


def _require(name: str) -> Any:
  value = getattr(FLAGS, name)
  if value is None:
    raise errors.ConfigError(f"--{name} is required", field=name)
  return value


def _config() -> core.PipelineConfig:
  overrides = {}
  for name in ("seed", "threads", "variant", "feature_set",
               "probability_mode"):
    if getattr(FLAGS, name) is not None:
      overrides[name] = getattr(FLAGS, name)
  if FLAGS.alpha is not None:
    overrides["smote_alpha"] = FLAGS.alpha
  return core.load_config(FLAGS.config, overrides)


@contextlib.contextmanager
def _stage(name: str):
  """Times a stage and appends its record to --run_log."""
  record: Dict[str, Any] = {"stage": name}
  start = time.perf_counter()
  yield record
  record["seconds"] = time.perf_counter() - start
  logging.info("stage %s finished in %.2fs: %s", name, record["seconds"],
               {k: v for k, v in record.items() if k != "stage"})
  if FLAGS.run_log:
    with open(FLAGS.run_log, "a") as f:
      f.write(json.dumps(record, sort_keys=True) + "\n")


def _positional(args: Sequence[str], n: int, usage: str) -> List[str]:
  if len(args) != n:
    raise errors.ConfigError(f"usage: ccfault {usage}", args=list(args))
  return list(args)


def _stream(path: str, cfg: core.PipelineConfig) -> pipeline.AnalysisStream:
  return pipeline.AnalysisStream(path, cfg, FLAGS.threads, FLAGS.aligned,
                                 FLAGS.length)


def _write_csv(df: pd.DataFrame, path: str) -> None:
  df.to_csv(path, index=False)
  logging.info("wrote %d rows to %s", len(df), path)


def _write_json(obj: Dict[str, Any], path: str) -> None:
  artifacts.write_summary(path, obj)


# Commands.


def cmd_import(args: Sequence[str]) -> None:
  meta, samples = _positional(args, 2, "import META.csv SAMPLES --out F")
  with _stage("import") as record:
    record["frames"] = columnar.import_columnar(meta, samples,
                                                _require("out"), FLAGS.length)


def cmd_synth(args: Sequence[str]) -> None:
  _positional(args, 0, "synth --scenario F --out F --sidecar F")
  scenario = synth.SynthScenario()
  if FLAGS.scenario:
    scenario = synth.load_scenario(FLAGS.scenario)
  if FLAGS.seed is not None:
    scenario = dataclasses.replace(scenario, seed=FLAGS.seed)
  out = _require("out")
  with _stage("synth") as record:
    record["frames"] = synth.write_synth(scenario, out,
                                         FLAGS.sidecar or out + ".jsonl")


def cmd_preprocess(args: Sequence[str]) -> None:
  (path,) = _positional(args, 1, "preprocess IN --out F")
  cfg = _config()
  out = _require("out")
  sidecar_path = FLAGS.sidecar or out + ".jsonl"

  def work(frame):
    core.validate_frame(frame, FLAGS.length)
    return preprocess.preprocess_frame(frame, cfg, FLAGS.aligned)

  with _stage("preprocess") as record, \
      sigb.SigbWriter(out, FLAGS.length) as writer, \
      open(sidecar_path, "w") as sidecar:
    for batch in pipeline.chunks(sigb.iter_sigb(path, FLAGS.length), 64):
      for corrected, flats in pipeline.ordered_map(work, batch, cfg.threads):
        writer.write(corrected)
        sidecar.write(json.dumps({
            "frame": corrected.id, "shifts": list(corrected.shifts),
            "noise_levels": [f.noise_level for f in flats]},
                                 sort_keys=True) + "\n")
    record["frames"] = writer.count


def cmd_detect(args: Sequence[str]) -> None:
  (path,) = _positional(args, 1, "detect IN --out F")
  cfg = _config()
  ids, detected = [], []
  with _stage("detect") as record:
    for analysis in _stream(path, cfg):
      ids.append(analysis.frame_id)
      detected.append(analysis.pulses)
    df = pulses_lib.pulses_frame(ids, detected)
    _write_csv(df, _require("out"))
    record.update(frames=len(ids), pulses=len(df))


def _cluster_fit(path: str, cfg: core.PipelineConfig) -> None:
  out = _require("out")
  with _stage("cluster_fit") as record:
    stream = _stream(path, cfg)
    bundle = pipeline.fit_clusters(stream, cfg, labels=stream.labels())
    artifacts.save_bundle(out, bundle)
    if FLAGS.centroids_out:
      _write_csv(pd.concat([clustering.centroids_frame(m)
                            for m in bundle.models.values()]),
                 FLAGS.centroids_out)
    record.update(frames=len(stream), passes=stream.passes,
                  templates=list(bundle.templates.clusters))


def _cluster_assign(path: str, cfg: core.PipelineConfig) -> None:
  bundle = artifacts.load_bundle(_require("bundle"))
  rows = []
  with _stage("cluster_assign") as record:
    for analysis in _stream(path, cfg):
      for phase, (flat, found) in enumerate(zip(analysis.flats,
                                                analysis.pulses)):
        idx = np.array([p.index for p in found], dtype=np.int64)
        w, kept = clustering.extract_windows(idx, flat.samples, cfg.n_before,
                                             cfg.waveform_length)
        all_ids = np.full(len(idx), -1)
        phase_ids = np.full(len(idx), -1)
        all_ids[kept] = clustering.assign(bundle.models["all"], w)
        phase_ids[kept] = clustering.assign(
            bundle.models[core.PHASE_NAMES[phase]], w)
        rows += [(analysis.frame_id, core.PHASE_NAMES[phase], int(i), int(a),
                  int(b)) for i, a, b in zip(idx, all_ids, phase_ids)]
    _write_csv(pd.DataFrame(rows, columns=["frame", "phase", "index",
                                           "cluster_all", "cluster_phase"]),
               _require("out"))
    record.update(pulses=len(rows))


def _cluster_sweep(path: str, cfg: core.PipelineConfig) -> None:
  stream = _stream(path, cfg)
  with _stage("cluster_sweep") as record:
    waveforms = clustering.sampled_waveforms(stream, cfg, cfg.seed)["all"]
    k_list = [int(k) for k in FLAGS.k_list]
    curve = clustering.sse_curve(waveforms, k_list,
                                 max_iter=cfg.kmeans_max_iter,
                                 tol=cfg.kmeans_tol)
    _write_csv(clustering.sse_curve_frame(curve, cfg.k_all), _require("out"))
    if FLAGS.k_pairs:
      pairs = [tuple(int(v) for v in p.split(":")) for p in FLAGS.k_pairs]
      study = clustering.cluster_count_study(stream, cfg, pairs, FLAGS.trials)
      _write_csv(study, _require("study_out"))
    record.update(frames=len(stream), waveforms=len(waveforms))


_CLUSTER_ACTIONS = {"fit": _cluster_fit, "assign": _cluster_assign,
                    "sweep": _cluster_sweep}


def cmd_cluster(args: Sequence[str]) -> None:
  action, path = _positional(args, 2, "cluster fit|assign|sweep IN ...")
  if action not in _CLUSTER_ACTIONS:
    raise errors.ConfigError(f"unknown cluster action {action!r}",
                             action=action)
  _CLUSTER_ACTIONS[action](path, _config())


def cmd_featurize(args: Sequence[str]) -> None:
  (path,) = _positional(args, 1, "featurize IN --bundle F --out F")
  cfg = _config()
  bundle = artifacts.load_bundle(_require("bundle"))
  vectors, labels = [], []
  with _stage("featurize") as record:
    size = 4 * (cfg.threads or os.cpu_count() or 1)
    for batch in pipeline.chunks(sigb.iter_sigb(path, FLAGS.length), size):
      vectors += pipeline.featurize(batch, bundle, cfg, aligned=FLAGS.aligned,
                                    length=FLAGS.length)
      labels += [f.faulty for f in batch]
    _write_csv(pipeline.feature_table(vectors, labels), _require("out"))
    record.update(frames=len(vectors), features=len(bundle.manifest))


def cmd_segments(args: Sequence[str]) -> None:
  (path,) = _positional(args, 1, "segments IN --bundle F --out F")
  cfg = _config()
  bundle = artifacts.load_bundle(_require("bundle"))
  rows = []
  n_frames = 0
  with _stage("segments") as record:
    for analysis in _stream(path, cfg):
      n_frames += 1
      counts = features.frame_segment_counts(analysis, bundle, cfg)
      rows += [(analysis.frame_id, c, *counts[c].tolist())
               for c in range(len(counts))]
    columns = ["frame_id", "cluster"] + [f"segment_{i}"
                                         for i in range(cfg.n_segments)]
    _write_csv(pd.DataFrame(rows, columns=columns), _require("out"))
    record.update(frames=n_frames)


def _read_features(path: str):
  return pipeline.table_arrays(pd.read_csv(path))


def cmd_train(args: Sequence[str]) -> None:
  (path,) = _positional(args, 1, "train FEATURES.csv --out F")
  cfg = _config()
  out = _require("out")
  _, names, x, y = _read_features(path)
  if y is None:
    raise errors.EmptyClass(f"{path} holds no labels", path=path)
  known = y >= 0
  with _stage("train") as record:
    model = ensemble_lib.train_ensemble(
        x[known], y[known], names, cfg, FLAGS.variant, FLAGS.alpha,
        FLAGS.seeds, FLAGS.folds, FLAGS.threads)
    artifacts.save_ensemble(out, model)
    summary = artifacts.ensemble_summary(model)
    _write_json(summary, out + ".json")
    if FLAGS.report_out:
      _write_csv(ensemble_lib.report_frame(model), FLAGS.report_out)
    record.update(frames=int(known.sum()), members=len(model.models),
                  features=len(model.manifest), threshold=model.threshold)


def cmd_predict(args: Sequence[str]) -> None:
  (path,) = _positional(args, 1, "predict FEATURES.csv --model F --out F")
  model = artifacts.load_ensemble(_require("model"))
  ids, names, x, y = _read_features(path)
  with _stage("predict") as record:
    p, _ = ensemble_lib.predict(model, names, x)
    threshold = model.threshold if FLAGS.threshold is None else FLAGS.threshold
    decision = p >= threshold
    df = pd.DataFrame({pipeline.FRAME_COLUMN: ids, PROBABILITY_COLUMN: p,
                       DECISION_COLUMN: decision.astype(int),
                       THRESHOLD_COLUMN: threshold})
    if y is not None:
      df[pipeline.LABEL_COLUMN] = y
    _write_csv(df, _require("out"))
    record.update(frames=len(ids))


def cmd_evaluate(args: Sequence[str]) -> None:
  (path,) = _positional(args, 1, "evaluate PREDICTIONS.csv --out F")
  df = pd.read_csv(path)
  if FLAGS.labels:
    truth = pd.read_csv(FLAGS.labels)[[pipeline.FRAME_COLUMN,
                                        pipeline.LABEL_COLUMN]]
    df = df.drop(columns=[pipeline.LABEL_COLUMN], errors="ignore").merge(
        truth, on=pipeline.FRAME_COLUMN, how="inner")
  if pipeline.LABEL_COLUMN not in df.columns:
    raise errors.EmptyClass("predictions carry no labels; pass --labels",
                            path=path)
  df = df[df[pipeline.LABEL_COLUMN] >= 0]
  p = df[PROBABILITY_COLUMN].to_numpy(dtype=np.float64)
  y = df[pipeline.LABEL_COLUMN].to_numpy() == 1
  threshold = FLAGS.threshold
  if threshold is None:
    threshold = (float(df[THRESHOLD_COLUMN].iloc[0])
                 if THRESHOLD_COLUMN in df.columns and len(df) else 0.5)
  with _stage("evaluate") as record:
    result = metrics.evaluate(p, y, threshold)
    if FLAGS.sweep:
      sweep = metrics.threshold_sweep(p, y)
      result["sweep_best_threshold"] = sweep.best_threshold
      result["sweep_best_mcc"] = sweep.best_mcc
      if FLAGS.sweep_out:
        _write_csv(sweep.table, FLAGS.sweep_out)
    _write_json(result, _require("out"))
    record.update(frames=len(df), mcc=result["mcc"])


def cmd_importance(args: Sequence[str]) -> None:
  _positional(args, 0, "importance --model F --out F [--bundle F]")
  model = artifacts.load_ensemble(_require("model"))
  with _stage("importance") as record:
    bank = (artifacts.load_bundle(FLAGS.bundle).templates if FLAGS.bundle
            else None)
    _write_csv(ensemble_lib.importance_frame(model, bank), _require("out"))
    if FLAGS.groups_out:
      groups = ensemble_lib.importance_by_group(model)
      _write_csv(pd.DataFrame(list(groups.items()),
                              columns=["category", "gain"]),
                 FLAGS.groups_out)
    record.update(features=len(model.manifest))


def summarize_run_log(path: str) -> Dict[str, Any]:
  """Per-stage totals and per-frame latencies of a run log."""
  stages: Dict[str, Dict[str, float]] = {}
  with open(path) as f:
    for line in f:
      if not line.strip():
        continue
      record = json.loads(line)
      entry = stages.setdefault(record["stage"],
                                {"runs": 0, "seconds": 0.0, "frames": 0})
      entry["runs"] += 1
      entry["seconds"] += record.get("seconds", 0.0)
      entry["frames"] += record.get("frames", 0) or 0
  latency = {}
  for name in ("featurize", "predict"):
    entry = stages.get(name)
    if entry and entry["frames"]:
      latency[f"{name}_seconds_per_frame"] = entry["seconds"] / entry["frames"]
  return {"stages": stages, "latency": latency,
          "total_seconds": sum(e["seconds"] for e in stages.values())}


def cmd_report(args: Sequence[str]) -> None:
  _positional(args, 0, "report --run_log F --out F")
  _write_json(summarize_run_log(_require("run_log")), _require("out"))


COMMANDS: Dict[str, Callable[[Sequence[str]], None]] = {
    "import": cmd_import,
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "detect": cmd_detect,
    "cluster": cmd_cluster,
    "featurize": cmd_featurize,
    "segments": cmd_segments,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "importance": cmd_importance,
    "report": cmd_report,
}


def execute(argv: Sequence[str]) -> int:
  """Runs one command from already-parsed flags; returns the exit code."""
  if len(argv) < 2 or argv[1] not in COMMANDS:
    sys.stderr.write(errors.ConfigError(
        f"expected one of {sorted(COMMANDS)}",
        args=list(argv[1:])).to_json() + "\n")
    return 2
  try:
    COMMANDS[argv[1]](argv[2:])
  except errors.CCFaultError as e:
    logging.error("%s: %s", e.code, e.message)
    sys.stderr.write(e.to_json() + "\n")
    return 2
  except Exception as e:  # pylint: disable=broad-except
    logging.exception("unexpected failure")
    sys.stderr.write(errors.error_payload(e) + "\n")
    return 1
  return 0


def main(argv: Sequence[str]) -> int:
  return execute(argv)


def run():
  app.run(main)


if __name__ == "__main__":
  run()
