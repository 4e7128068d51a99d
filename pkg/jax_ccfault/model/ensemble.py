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

"""Module for multi-seed cross-validated ensembles of boosted-tree models.

Three training variants are supported:

  I:   every fold is used once as an internal test split and the next fold as
       the validation split; the full feature manifest is used.
  II:  standard K-fold with the validation fold held out; average-height
       features are dropped.
  III: variant II with borderline oversampling of each training split.

The decision threshold maximizes MCC over the pooled validation predictions
of all members.
"""
from concurrent import futures
import dataclasses
import functools
import math
import os

from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import jax
from jax._src.util import safe_map, safe_zip
import numpy as np
import pandas as pd

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors
from jax_ccfault import features
from jax_ccfault import metrics
from jax_ccfault.model import gbdt
from jax_ccfault.model import oversample

map, unsafe_map = safe_map, map
zip, unsafe_zip = safe_zip, zip

REMOVED_PREFIX = "avg_height"


class MemberReport(NamedTuple):
  seed: int
  fold: int
  n_trees: int
  valid_logloss: float
  test_mcc: float = math.nan
  n_synthetic: int = 0


@dataclasses.dataclass(frozen=True)
class EnsembleModel:
  models: Tuple[gbdt.BoostedTreeModel, ...]
  threshold: float
  manifest: Tuple[str, ...]
  variant: str = "II"
  alpha: Optional[float] = None
  feature_set: str = "full"
  probability_mode: str = "margin"
  report: Tuple[MemberReport, ...] = ()
  valid_mcc: float = math.nan

  @functools.cached_property
  def forest(self) -> gbdt.Forest:
    return gbdt.stack_forest([m.trees for m in self.models])

  def member_margins(self, x) -> np.ndarray:
    base = np.array([m.base_score for m in self.models])
    return gbdt.forest_margins(self.forest, x) + base[None, :]

  def predict_proba(self, x) -> np.ndarray:
    margins = self.member_margins(x)
    if self.probability_mode == "probability":
      return np.asarray(jax.nn.sigmoid(margins)).mean(axis=1)
    return np.asarray(jax.nn.sigmoid(margins.mean(axis=1)))


def select_features(manifest: Sequence[str], variant: str = "II",
                    feature_set: str = "full") -> Tuple[str, ...]:
  names = tuple(manifest)
  if variant in ("II", "III"):
    names = tuple(n for n in names if not n.startswith(REMOVED_PREFIX))
  if feature_set == "all_pulse":
    names = tuple(n for n in names if features.is_all_pulse(n))
  elif feature_set == "cluster":
    names = tuple(n for n in names if not features.is_all_pulse(n))
  return names


def column_indexes(names: Sequence[str], wanted: Sequence[str]) -> np.ndarray:
  """Positions of `wanted` inside `names`; ManifestMismatch when absent."""
  position = {n: i for i, n in enumerate(names)}
  missing = [n for n in wanted if n not in position]
  if missing:
    raise errors.ManifestMismatch(
        f"{len(missing)} model features absent from the input",
        missing=missing[:10], expected=len(wanted), got=len(names))
  return np.array([position[n] for n in wanted], dtype=np.int64)


class _Split(NamedTuple):
  seed: int
  fold: int
  train: np.ndarray
  valid: np.ndarray
  test: np.ndarray


def fold_splits(n: int, variant: str, seeds: int, folds: int,
                base_seed: int = 0) -> List[_Split]:
  """Row partitions for every (seed, fold) pair, seed-major."""
  min_folds = 3 if variant == "I" else 2
  if folds < min_folds:
    raise errors.ConfigError(
        f"variant {variant} needs at least {min_folds} folds, got {folds}",
        field="folds")
  splits = []
  for s in range(seeds):
    perm = np.random.default_rng(base_seed + s).permutation(n)
    parts = np.array_split(perm, folds)
    for f in range(folds):
      if variant == "I":
        test, valid = parts[f], parts[(f + 1) % folds]
        rest = [p for i, p in enumerate(parts)
                if i not in (f, (f + 1) % folds)]
      else:
        test, valid = parts[f][:0], parts[f]
        rest = [p for i, p in enumerate(parts) if i != f]
      splits.append(_Split(s, f, np.sort(np.concatenate(rest)),
                           np.sort(valid), np.sort(test)))
  return splits


def _fit_member(split: _Split, x: np.ndarray, y: np.ndarray,
                params: gbdt.GBDTParams, smote: Optional[
                    oversample.OversampleConfig], member_seed: int):
  x_train, y_train = x[split.train], y[split.train]
  n_synthetic = 0
  if smote is not None:
    aug = oversample.smote_svm(x_train, y_train, smote, member_seed)
    x_train, y_train = aug.x, aug.y
    n_synthetic = int(aug.synthetic.sum())
  model = gbdt.fit_gbdt(x_train, y_train, params, member_seed,
                        valid=(x[split.valid], y[split.valid]))
  logging.vlog(1, "member seed %d fold %d: %d trees", split.seed, split.fold,
               len(model.trees))
  return model, n_synthetic


def train_ensemble(x, y, names: Sequence[str],
                   cfg: core.PipelineConfig = core.PipelineConfig(),
                   variant: Optional[str] = None,
                   alpha: Optional[float] = None,
                   seeds: Optional[int] = None,
                   folds: Optional[int] = None,
                   threads: Optional[int] = None) -> EnsembleModel:
  """Trains `seeds * folds` boosted-tree members and estimates the threshold.

  Args:
    x: (n_frames, n_features) feature matrix with columns named by `names`.
    y: 0/1 frame labels.
    names: column names of `x`.
    cfg: pipeline configuration supplying defaults for the other arguments.
    variant: "I", "II" or "III".
    alpha: oversampling ratio, variant III only.
    seeds: number of random seeds.
    folds: number of cross-validation folds.
    threads: worker threads; 0 means one per CPU.

  Returns:
    An EnsembleModel whose members are ordered seed-major.
  """
  variant = variant or cfg.variant
  seeds = seeds or cfg.ensemble_seeds
  folds = folds or cfg.folds
  threads = cfg.threads if threads is None else threads
  x = np.asarray(x, dtype=np.float64)
  y = np.asarray(y).astype(np.int64)
  if x.shape != (len(y), len(names)):
    raise errors.ManifestMismatch(
        f"feature matrix {x.shape} does not match {len(y)} labels and "
        f"{len(names)} names", rows=len(y), columns=len(names))
  n_pos = int(y.sum())
  if n_pos == 0 or n_pos == len(y):
    raise errors.EmptyClass(f"labels hold a single class ({n_pos} faulty of "
                            f"{len(y)})", positives=n_pos, rows=len(y))

  selected = select_features(names, variant, cfg.feature_set)
  x = x[:, column_indexes(names, selected)]
  params = gbdt.GBDTParams.from_config(cfg)
  smote = None
  if variant == "III":
    smote = oversample.OversampleConfig.from_config(cfg, alpha)
    alpha = smote.alpha
  else:
    alpha = None

  splits = fold_splits(len(y), variant, seeds, folds, cfg.seed)
  member_seeds = [cfg.seed + i for i in range(len(splits))]
  logging.info("training variant %s ensemble: %d members on %d frames x %d "
               "features", variant, len(splits), len(y), len(selected))
  workers = threads or os.cpu_count() or 1
  with futures.ThreadPoolExecutor(max_workers=workers) as pool:
    fitted = list(pool.map(
        lambda args: _fit_member(args[0], x, y, params, smote, args[1]),
        unsafe_zip(splits, member_seeds)))

  draft = EnsembleModel(tuple(m for m, _ in fitted), 0.5, selected, variant,
                        alpha, cfg.feature_set, cfg.probability_mode)
  # One stacked pass scores every member on every row.
  p_all = np.asarray(jax.nn.sigmoid(draft.member_margins(x)))

  member = np.arange(len(splits))
  pooled_p = np.concatenate([p_all[s.valid, i] for i, s in zip(member, splits)])
  pooled_y = np.concatenate([y[s.valid] for s in splits])
  threshold, valid_mcc = metrics.best_threshold(pooled_p, pooled_y,
                                                cfg.threshold_step)

  report = []
  for i, (model, n_synth), split in unsafe_zip(member, fitted, splits):
    test_mcc = math.nan
    if len(split.test):
      pred = p_all[split.test, i] >= threshold
      test_mcc = metrics.mcc(metrics.confusion(pred, y[split.test] == 1))
    valid_loss = model.valid_loss[-1] if model.valid_loss else math.nan
    report.append(MemberReport(split.seed, split.fold, len(model.trees),
                               float(valid_loss), test_mcc, n_synth))
  logging.info("threshold %.3f, pooled validation MCC %.4f", threshold,
               valid_mcc)
  return dataclasses.replace(draft, threshold=float(threshold),
                             report=tuple(report), valid_mcc=float(valid_mcc))


def predict(ensemble: EnsembleModel, names: Sequence[str], x
            ) -> Tuple[np.ndarray, np.ndarray]:
  """Returns (probability, faulty) per row of `x`, columns named by `names`."""
  x = np.atleast_2d(np.asarray(x, dtype=np.float64))
  if x.shape[1] != len(names):
    raise errors.ManifestMismatch(
        f"{x.shape[1]} columns but {len(names)} names", columns=x.shape[1],
        names=len(names))
  x = x[:, column_indexes(names, ensemble.manifest)]
  p = ensemble.predict_proba(x)
  return p, p >= ensemble.threshold


def report_frame(ensemble: EnsembleModel) -> pd.DataFrame:
  df = pd.DataFrame([r._asdict() for r in ensemble.report],
                    columns=list(MemberReport._fields))
  df["threshold"] = ensemble.threshold
  df["pooled_valid_mcc"] = ensemble.valid_mcc
  return df


def feature_importance(ensemble: EnsembleModel) -> Dict[str, float]:
  """Total split gain per feature over all members, largest first."""
  gains = np.zeros(len(ensemble.manifest))
  for model in ensemble.models:
    gains += gbdt.feature_importance(model)
  order = np.argsort(-gains, kind="stable")
  return {ensemble.manifest[i]: float(gains[i]) for i in order}


def importance_by_group(ensemble: EnsembleModel,
                        by: str = "category") -> Dict[str, float]:
  """Gains summed per feature category (count/height/sd/rmse) or kind."""
  groups = features.feature_groups(ensemble.manifest)
  slot = 0 if by == "category" else 1
  out: Dict[str, float] = {}
  for name, gain in feature_importance(ensemble).items():
    key = groups[name][slot]
    out[key] = out.get(key, 0.0) + gain
  return dict(sorted(out.items(), key=lambda kv: -kv[1]))


def importance_frame(ensemble: EnsembleModel,
                     bank: Optional[features.TemplateBank] = None
                     ) -> pd.DataFrame:
  """Gain per feature, with template source clusters when a bank is given."""
  groups = features.feature_groups(ensemble.manifest)
  rows = [(name, gain, *groups[name])
          for name, gain in feature_importance(ensemble).items()]
  df = pd.DataFrame(rows, columns=["feature", "gain", "category", "kind"])
  if bank is not None:
    sources = bank.sources()
    df["source_cluster"] = [sources.get(name, -1) for name in df["feature"]]
  return df
