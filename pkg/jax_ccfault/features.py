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

"""Module for building the per-frame feature vector.

A frame's vector holds all-pulse features (pulse counts per quadrant pair,
height statistics over quadrants one and three, and template-matching
degrees) followed by cluster-specific features (count, average height, height
SD and concentration degree for every cluster of the combined model and of
the three per-phase models). Undefined statistics are coded as -1.
"""
import dataclasses

from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from absl import logging

from jax_ccfault import clustering
from jax_ccfault import core
from jax_ccfault import errors

MISSING = -1.0
TEMPLATE_BEFORE = 15
CLUSTER_KINDS = ("count", "avg_height", "sd_height", "concentration")
ALL_PULSE_HEAD = ("count_q13", "count_q24", "count_all", "avg_height_q13",
                  "sd_height_q13")
_CATEGORIES = {"count": "count", "avg_height": "height", "sd_height": "sd",
               "concentration": "rmse", "template_rmse": "rmse"}


@dataclasses.dataclass(frozen=True)
class TemplateBank:
  """Fixed-length pulse templates and the all-phase clusters they came from."""
  templates: np.ndarray
  clusters: Tuple[int, ...]
  before: int = TEMPLATE_BEFORE
  provenance: str = "cluster-mean"

  @property
  def length(self) -> int:
    return self.templates.shape[1]

  def sources(self) -> Dict[str, int]:
    """Template feature name to the all-phase cluster it was averaged from."""
    return {f"template_rmse_{i + 1}": int(c)
            for i, c in enumerate(self.clusters)}


@dataclasses.dataclass(frozen=True)
class ClusterBundle:
  models: Dict[str, clustering.ClusterModel]
  templates: TemplateBank

  @property
  def k_phase(self) -> int:
    return self.models[core.PHASE_NAMES[0]].k

  @property
  def k_all(self) -> int:
    return self.models["all"].k

  @property
  def manifest(self) -> Tuple[str, ...]:
    return feature_manifest(self.k_phase, self.k_all,
                            len(self.templates.clusters))


class FeatureVector(NamedTuple):
  frame_id: str
  names: Tuple[str, ...]
  values: np.ndarray

  def as_dict(self) -> Dict[str, float]:
    return dict(zip(self.names, self.values.tolist()))


def feature_manifest(k_phase: int = 6, k_all: int = 15,
                     n_templates: int = 8) -> Tuple[str, ...]:
  names = list(ALL_PULSE_HEAD)
  names += [f"template_rmse_{i + 1}" for i in range(n_templates)]
  sizes = [("all", k_all)] + [(p, k_phase) for p in core.PHASE_NAMES]
  for kind in CLUSTER_KINDS:
    names += [f"{kind}_{scope}_{i}" for scope, k in sizes for i in range(k)]
  return tuple(names)


def is_all_pulse(name: str) -> bool:
  return name in ALL_PULSE_HEAD or name.startswith("template_rmse_")


def feature_groups(manifest: Sequence[str]) -> Dict[str, Tuple[str, str]]:
  """Maps each name to (category, kind).

  Categories are count, height, sd and rmse; kinds are all_pulse and cluster.
  """
  groups = {}
  for name in manifest:
    prefix = next(p for p in sorted(_CATEGORIES, key=len, reverse=True)
                  if name.startswith(p))
    kind = "all_pulse" if is_all_pulse(name) else "cluster"
    groups[name] = (_CATEGORIES[prefix], kind)
  return groups


def height_stats(heights) -> Tuple[int, float, float]:
  h = np.asarray(heights, dtype=np.float64)
  if len(h) == 0:
    return 0, MISSING, MISSING
  return len(h), float(h.mean()), float(h.std())


def count_height_stats(heights, groups, k: int
                       ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
  """Count, mean and population SD of heights per group id in [0, k)."""
  h = np.asarray(heights, dtype=np.float64)
  g = np.asarray(groups, dtype=np.int64)
  counts = np.bincount(g, minlength=k)
  sums = np.bincount(g, weights=h, minlength=k)
  occupied = counts > 0
  avg = np.full(k, MISSING)
  sd = np.full(k, MISSING)
  avg[occupied] = sums[occupied] / counts[occupied]
  dev = (h - avg[g]) ** 2 if len(g) else h
  var = np.bincount(g, weights=dev, minlength=k)
  sd[occupied] = np.sqrt(var[occupied] / counts[occupied])
  return counts, avg, sd


@jax.jit
def _rmse_matrix(x, t):
  return jnp.sqrt(jnp.mean((x[:, None, :] - t[None, :, :]) ** 2, axis=-1))


@jax.jit
def _rmse_rows(x, y):
  return jnp.sqrt(jnp.mean((x - y) ** 2, axis=-1))


def template_match(windows, templates) -> np.ndarray:
  """Mean RMSE between the windows and each template; -1 without windows."""
  t = np.asarray(templates, dtype=np.float64)
  x = np.asarray(windows, dtype=np.float64).reshape(-1, t.shape[1])
  if len(x) == 0:
    return np.full(len(t), MISSING)
  return np.asarray(_rmse_matrix(x, t)).mean(axis=0)


def concentration(waveforms, model: clustering.ClusterModel,
                  labels: Optional[np.ndarray] = None) -> np.ndarray:
  """Mean RMSE of each cluster's members to its centroid; -1 when empty."""
  c = model.centroids
  x = np.asarray(waveforms, dtype=np.float64).reshape(-1, c.shape[1])
  if labels is None:
    labels = clustering.assign(model, x)
  out = np.full(model.k, MISSING)
  if len(x) == 0:
    return out
  rmse = np.asarray(_rmse_rows(x, c[labels]))
  counts = np.bincount(labels, minlength=model.k)
  sums = np.bincount(labels, weights=rmse, minlength=model.k)
  occupied = counts > 0
  out[occupied] = sums[occupied] / counts[occupied]
  return out


def _cluster_block(waveforms, heights, model) -> Tuple[np.ndarray, ...]:
  labels = clustering.assign(model, waveforms)
  counts, avg, sd = count_height_stats(heights, labels, model.k)
  return counts, avg, sd, concentration(waveforms, model, labels)


def build_features(analysis: core.FrameAnalysis, bundle: ClusterBundle,
                   cfg: core.PipelineConfig) -> FeatureVector:
  """Feature vector of one analysed frame, ordered by the bundle manifest."""
  bank = bundle.templates
  length = cfg.waveform_length
  heights, quadrants, windows, kept_heights, q13_windows = [], [], [], [], []
  for flat, pulses in zip(analysis.flats, analysis.pulses):
    idx = np.array([p.index for p in pulses], dtype=np.int64)
    h = np.array([p.height for p in pulses], dtype=np.float64)
    q = np.array([p.quadrant for p in pulses], dtype=np.int64)
    w, kept = clustering.extract_windows(idx, flat.samples, cfg.n_before,
                                         length)
    tw, _ = clustering.extract_windows(idx[(q == 1) | (q == 3)],
                                       flat.samples, bank.before, bank.length)
    heights.append(h)
    quadrants.append(q)
    windows.append(w)
    kept_heights.append(h[kept])
    q13_windows.append(tw)

  h_all = np.concatenate(heights)
  q_all = np.concatenate(quadrants)
  q13 = (q_all == 1) | (q_all == 3)
  _, avg_q13, sd_q13 = height_stats(h_all[q13])
  head = [int(q13.sum()), int((~q13).sum()), len(h_all), avg_q13, sd_q13]
  rmse = template_match(np.concatenate(q13_windows), bank.templates)

  blocks = [_cluster_block(np.concatenate(windows),
                           np.concatenate(kept_heights), bundle.models["all"])]
  for name, w, h in zip(core.PHASE_NAMES, windows, kept_heights):
    blocks.append(_cluster_block(w, h, bundle.models[name]))
  cluster_values = [np.concatenate([b[i] for b in blocks])
                    for i in range(len(CLUSTER_KINDS))]

  values = np.concatenate([np.asarray(head, dtype=np.float64), rmse]
                          + cluster_values).astype(np.float64)
  names = bundle.manifest
  assert len(values) == len(names), (len(values), len(names))
  return FeatureVector(analysis.frame_id, names, values)


def segment_counts(indexes, clusters, k: int, length: int,
                   n_segments: int = 20) -> np.ndarray:
  """Pulse counts per (cluster, equal-length signal segment)."""
  idx = np.asarray(indexes, dtype=np.int64)
  cl = np.asarray(clusters, dtype=np.int64)
  out = np.zeros((k, n_segments), dtype=np.int64)
  if len(idx):
    np.add.at(out, (cl, (idx * n_segments) // length), 1)
  return out


def frame_segment_counts(analysis: core.FrameAnalysis, bundle: ClusterBundle,
                         cfg: core.PipelineConfig) -> np.ndarray:
  """Segment counts of a frame under the combined (all-phase) clusters."""
  model = bundle.models["all"]
  out = np.zeros((model.k, cfg.n_segments), dtype=np.int64)
  for flat, pulses in zip(analysis.flats, analysis.pulses):
    idx = np.array([p.index for p in pulses], dtype=np.int64)
    w, kept = clustering.extract_windows(idx, flat.samples, cfg.n_before,
                                         cfg.waveform_length)
    out += segment_counts(idx[kept], clustering.assign(model, w), model.k,
                          len(flat.samples), cfg.n_segments)
  return out


def _assigned_windows(analyses: Sequence[core.FrameAnalysis],
                      model: clustering.ClusterModel,
                      cfg: core.PipelineConfig, before: int, length: int):
  """Yields (cluster ids, template windows) per frame phase.

  Only pulses whose template window fits are included.
  """
  for analysis in analyses:
    for flat, pulses in zip(analysis.flats, analysis.pulses):
      idx = np.array([p.index for p in pulses], dtype=np.int64)
      tw, kept = clustering.extract_windows(idx, flat.samples, before, length)
      w, _ = clustering.extract_windows(idx[kept], flat.samples, cfg.n_before,
                                        cfg.waveform_length)
      yield clustering.assign(model, w), tw


def all_scope_counts(analyses: Sequence[core.FrameAnalysis],
                     model: clustering.ClusterModel,
                     cfg: core.PipelineConfig) -> np.ndarray:
  """Per-frame pulse counts of every combined-model cluster."""
  counts = np.zeros((len(analyses), model.k), dtype=np.int64)
  for analysis_id, analysis in enumerate(analyses):
    for flat, pulses in zip(analysis.flats, analysis.pulses):
      idx = np.array([p.index for p in pulses], dtype=np.int64)
      w, _ = clustering.extract_windows(idx, flat.samples, cfg.n_before,
                                        cfg.waveform_length)
      counts[analysis_id] += np.bincount(clustering.assign(model, w),
                                         minlength=model.k)
  return counts


def cluster_count_ratios(counts, faulty) -> Tuple[np.ndarray, np.ndarray]:
  """Mean per-frame share of each cluster in faulty and non-faulty frames."""
  counts = np.asarray(counts, dtype=np.float64)
  faulty = np.asarray(faulty, dtype=bool)
  totals = counts.sum(axis=1)
  has_pulses = totals > 0
  shares = np.zeros_like(counts)
  shares[has_pulses] = counts[has_pulses] / totals[has_pulses, None]
  pos, neg = has_pulses & faulty, has_pulses & ~faulty
  if not pos.any() or not neg.any():
    raise errors.EmptyClass(
        "cluster count ratios need faulty and non-faulty frames with pulses",
        faulty=int(pos.sum()), non_faulty=int(neg.sum()))
  return shares[pos].mean(axis=0), shares[neg].mean(axis=0)


def select_template_clusters(counts, faulty, n_templates: int = 8
                             ) -> Tuple[int, ...]:
  """Occupied clusters with the largest faulty minus non-faulty share."""
  pos, neg = cluster_count_ratios(counts, faulty)
  occupied = np.asarray(counts).sum(axis=0) > 0
  order = [int(c) for c in np.argsort(-(pos - neg), kind="stable")
           if occupied[c]]
  if len(order) < n_templates:
    raise errors.ClusterEmpty(
        f"only {len(order)} occupied clusters for {n_templates} templates",
        occupied=len(order), n_templates=n_templates)
  return tuple(order[:n_templates])


def derive_templates(model: clustering.ClusterModel,
                     analyses: Sequence[core.FrameAnalysis],
                     clusters: Sequence[int], cfg: core.PipelineConfig,
                     before: int = TEMPLATE_BEFORE) -> TemplateBank:
  """Mean template-length window of each selected cluster's member pulses."""
  if len(clusters) != cfg.n_templates:
    raise errors.ConfigError(
        f"template selection needs {cfg.n_templates} clusters, got "
        f"{len(clusters)}", field="template_clusters")
  length = cfg.template_window
  sums = np.zeros((model.k, length))
  counts = np.zeros(model.k, dtype=np.int64)
  for labels, tw in _assigned_windows(analyses, model, cfg, before, length):
    if len(labels):
      np.add.at(sums, labels, tw)
      counts += np.bincount(labels, minlength=model.k)
  for c in clusters:
    if counts[c] == 0:
      raise errors.ClusterEmpty(f"selected cluster {c} has no member pulses",
                                cluster=int(c))
  templates = sums[list(clusters)] / counts[list(clusters), None]
  logging.info("templates from clusters %s (%s members)", list(clusters),
               counts[list(clusters)].tolist())
  return TemplateBank(templates, tuple(int(c) for c in clusters), before)
