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

"""Module for running the per-frame stages over batches of frames."""
from concurrent import futures
import os

from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd

from absl import logging

from jax_ccfault import clustering
from jax_ccfault import core
from jax_ccfault import features
from jax_ccfault import preprocess
from jax_ccfault import pulses as pulses_lib
from jax_ccfault.data import sigb

A = TypeVar("A")
B = TypeVar("B")

FRAME_COLUMN = "frame_id"
LABEL_COLUMN = "faulty"


def ordered_map(fn: Callable[[A], B], items: Iterable[A],
                threads: int = 0) -> List[B]:
  """`fn` over `items` on a thread pool; results keep the input order."""
  workers = threads or os.cpu_count() or 1
  if workers == 1:
    return [fn(item) for item in items]
  with futures.ThreadPoolExecutor(max_workers=workers) as pool:
    return list(pool.map(fn, items))


def analyze_frame(frame: core.SignalFrame, cfg: core.PipelineConfig,
                  aligned: bool = False,
                  length: int = core.SAMPLES_PER_CYCLE) -> core.FrameAnalysis:
  """Preprocesses a frame and detects the pulses of every phase."""
  core.validate_frame(frame, length)
  _, flats = preprocess.preprocess_frame(frame, cfg, aligned)
  detected = tuple(tuple(pulses_lib.detect_pulses(flat, cfg, phase))
                   for phase, flat in enumerate(flats))
  return core.FrameAnalysis(frame.id, flats, detected, frame.faulty)


def analyze(frames: Sequence[core.SignalFrame], cfg: core.PipelineConfig,
            threads: Optional[int] = None, aligned: bool = False,
            length: int = core.SAMPLES_PER_CYCLE) -> List[core.FrameAnalysis]:
  threads = cfg.threads if threads is None else threads
  out = ordered_map(lambda f: analyze_frame(f, cfg, aligned, length), frames,
                    threads)
  logging.info("analysed %d frames, %d pulses", len(out),
               sum(a.n_pulses for a in out))
  return out


def featurize_frame(frame: core.SignalFrame, bundle: features.ClusterBundle,
                    cfg: core.PipelineConfig, aligned: bool = False,
                    length: int = core.SAMPLES_PER_CYCLE
                    ) -> Tuple[features.FeatureVector, core.FrameAnalysis]:
  analysis = analyze_frame(frame, cfg, aligned, length)
  return features.build_features(analysis, bundle, cfg), analysis


def featurize(frames: Sequence[core.SignalFrame],
              bundle: features.ClusterBundle, cfg: core.PipelineConfig,
              threads: Optional[int] = None, aligned: bool = False,
              length: int = core.SAMPLES_PER_CYCLE
              ) -> List[features.FeatureVector]:
  threads = cfg.threads if threads is None else threads
  return [v for v, _ in ordered_map(
      lambda f: featurize_frame(f, bundle, cfg, aligned, length), frames,
      threads)]


def fit_clusters(analyses: Sequence[core.FrameAnalysis],
                 cfg: core.PipelineConfig,
                 seed: Optional[int] = None,
                 labels: Optional[Sequence[Optional[bool]]] = None
                 ) -> features.ClusterBundle:
  """Fits the four cluster models and derives the matching templates.

  Template clusters come from `cfg.template_clusters` when set, otherwise
  from the labelled frames among `analyses`; `labels` defaults to the
  analyses' own labels.
  """
  models = clustering.fit_all_scopes(analyses, cfg, seed)
  clusters = cfg.template_clusters
  provenance = "configured"
  if not clusters:
    if labels is None:
      labels = [a.faulty for a in analyses]
    known = np.array([l is not None for l in labels], dtype=bool)
    faulty = np.array([bool(l) for l in labels], dtype=bool)
    counts = features.all_scope_counts(analyses, models["all"], cfg)
    clusters = features.select_template_clusters(
        counts[known], faulty[known], cfg.n_templates)
    provenance = "selected"
  bank = features.derive_templates(models["all"], analyses, clusters, cfg)
  bank = features.TemplateBank(bank.templates, bank.clusters, bank.before,
                               provenance)
  return features.ClusterBundle(models, bank)


def feature_table(vectors: Sequence[features.FeatureVector],
                  labels: Optional[Sequence[Optional[bool]]] = None
                  ) -> pd.DataFrame:
  """One row per frame: id, the manifest columns, then the label if known."""
  if not vectors:
    return pd.DataFrame(columns=[FRAME_COLUMN])
  names = list(vectors[0].names)
  df = pd.DataFrame(np.stack([v.values for v in vectors]), columns=names)
  df.insert(0, FRAME_COLUMN, [v.frame_id for v in vectors])
  if labels is not None and any(l is not None for l in labels):
    df[LABEL_COLUMN] = [(-1 if l is None else int(l)) for l in labels]
  return df


def table_arrays(df: pd.DataFrame
                 ) -> Tuple[List[str], List[str], np.ndarray,
                            Optional[np.ndarray]]:
  """Splits a feature table into (frame ids, names, matrix, labels)."""
  names = [c for c in df.columns if c not in (FRAME_COLUMN, LABEL_COLUMN)]
  y = df[LABEL_COLUMN].to_numpy() if LABEL_COLUMN in df.columns else None
  return (df[FRAME_COLUMN].astype(str).tolist(), names,
          df[names].to_numpy(dtype=np.float64), y)


def chunks(items: Iterable[A], size: int) -> Iterable[List[A]]:
  batch = []
  for item in items:
    batch.append(item)
    if len(batch) == size:
      yield batch
      batch = []
  if batch:
    yield batch


class AnalysisStream:
  """Re-iterable analyses of a SIGB file, recomputed on every pass.

  Stands in for a list of FrameAnalysis where the flattened signals of a
  whole dataset do not fit in memory.
  """

  def __init__(self, path: str, cfg: core.PipelineConfig,
               threads: Optional[int] = None, aligned: bool = False,
               length: int = core.SAMPLES_PER_CYCLE):
    self.path = path
    self.cfg = cfg
    self.threads = cfg.threads if threads is None else threads
    self.aligned = aligned
    self.length = length
    self._count = sigb.count_frames(path)
    self.passes = 0

  def __len__(self) -> int:
    return self._count

  def frames(self) -> Iterable[core.SignalFrame]:
    return sigb.iter_sigb(self.path, self.length)

  def labels(self) -> List[Optional[bool]]:
    return [f.faulty for f in self.frames()]

  def __iter__(self) -> Iterable[core.FrameAnalysis]:
    self.passes += 1
    logging.vlog(1, "analysis pass %d over %s", self.passes, self.path)
    size = 4 * (self.threads or os.cpu_count() or 1)
    for batch in chunks(self.frames(), size):
      yield from analyze(batch, self.cfg, self.threads, self.aligned,
                         self.length)
