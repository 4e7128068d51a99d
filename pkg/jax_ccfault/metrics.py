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

"""Module for frame-level classification metrics and threshold sweeps."""
import math

from typing import Any, Dict, List, NamedTuple, Tuple

import numpy as np
import pandas as pd

UNDEFINED = -1.0


class ConfusionCounts(NamedTuple):
  tp: int
  fp: int
  tn: int
  fn: int

  @property
  def total(self) -> int:
    return self.tp + self.fp + self.tn + self.fn


def confusion(predictions, labels) -> ConfusionCounts:
  pred = np.asarray(predictions, dtype=bool)
  y = np.asarray(labels, dtype=bool)
  if pred.shape != y.shape:
    raise ValueError(f"shape mismatch: {pred.shape} vs {y.shape}")
  return ConfusionCounts(int(np.sum(pred & y)), int(np.sum(pred & ~y)),
                         int(np.sum(~pred & ~y)), int(np.sum(~pred & y)))


def mcc(c: ConfusionCounts) -> float:
  """Matthews correlation; 0 when any marginal is empty."""
  tp, fp, tn, fn = (int(v) for v in c)
  den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
  if den == 0:
    return 0.0
  return (tp * tn - fp * fn) / math.sqrt(den)


def precision_recall(c: ConfusionCounts) -> Tuple[float, float]:
  precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else UNDEFINED
  recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else UNDEFINED
  return precision, recall


def threshold_grid(lo: float, hi: float, step: float) -> np.ndarray:
  n = int(round((hi - lo) / step)) + 1
  return np.round(lo + step * np.arange(n), 10)


def confusion_at(probabilities, labels, thresholds
                 ) -> Tuple[np.ndarray, ...]:
  """(tp, fp, tn, fn) arrays for `probabilities >= threshold`."""
  p = np.asarray(probabilities, dtype=np.float64)
  y = np.asarray(labels, dtype=bool)
  pos = np.sort(p[y])
  neg = np.sort(p[~y])
  t = np.asarray(thresholds, dtype=np.float64)
  tp = len(pos) - np.searchsorted(pos, t, side="left")
  fp = len(neg) - np.searchsorted(neg, t, side="left")
  return tp, fp, len(neg) - fp, len(pos) - tp


class Sweep(NamedTuple):
  table: pd.DataFrame
  best_threshold: float
  best_mcc: float


def threshold_sweep(probabilities, labels, lo: float = 0.2, hi: float = 0.8,
                    step: float = 0.005) -> Sweep:
  """MCC, precision and recall for every threshold of the grid."""
  thresholds = threshold_grid(lo, hi, step)
  rows = []
  for t, counts in zip(thresholds, zip(*confusion_at(probabilities, labels,
                                                     thresholds))):
    c = ConfusionCounts(*(int(v) for v in counts))
    rows.append((float(t), mcc(c), *precision_recall(c)))
  table = pd.DataFrame(rows, columns=["threshold", "mcc", "precision",
                                      "recall"])
  best = int(np.argmax(table["mcc"].to_numpy()))
  return Sweep(table, float(table["threshold"][best]),
               float(table["mcc"][best]))


def best_threshold(probabilities, labels, step: float = 0.001
                   ) -> Tuple[float, float]:
  """First MCC-maximizing threshold on the open grid (0, 1)."""
  sweep = threshold_sweep(probabilities, labels, step, 1.0 - step, step)
  return sweep.best_threshold, sweep.best_mcc


def evaluate(probabilities, labels, threshold: float) -> Dict[str, Any]:
  pred = np.asarray(probabilities, dtype=np.float64) >= threshold
  c = confusion(pred, labels)
  precision, recall = precision_recall(c)
  return {"threshold": float(threshold), "mcc": mcc(c),
          "precision": precision, "recall": recall, "tp": c.tp, "fp": c.fp,
          "tn": c.tn, "fn": c.fn, "n": c.total}


# Per-frame latency limits on a single thread.
MAX_FEATURIZE_SECONDS = 0.5
MAX_PREDICT_SECONDS = 0.05


def gate(result: Dict[str, Any], min_mcc: float,
         max_featurize: float = MAX_FEATURIZE_SECONDS,
         max_predict: float = MAX_PREDICT_SECONDS) -> List[str]:
  """Names of the acceptance gates a benchmark result misses."""
  failed = []
  if result["mcc"] < min_mcc:
    failed.append("mcc")
  if result.get("featurize_seconds_per_frame", 0.0) > max_featurize:
    failed.append("featurize_latency")
  if result.get("predict_seconds_per_frame", 0.0) > max_predict:
    failed.append("predict_latency")
  return failed
