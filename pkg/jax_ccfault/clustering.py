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

"""Module for pulse waveform extraction and k-means clustering."""
import dataclasses
import functools

from typing import Dict, List, Optional, Sequence, Tuple, Union

import jax
import jax.numpy as jnp
import numpy as np
import pandas as pd

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors

SCOPES = core.PHASE_NAMES + ("all",)


@dataclasses.dataclass(frozen=True)
class ClusterModel:
  """Centroids of one scope (a phase name or "all").

  `sse_history[i]` is the sum of squared distances under the centroids at the
  start of Lloyd iteration `i`; `sse` is the value under the final centroids.
  """
  centroids: np.ndarray
  scope: str
  seed: int
  sse: float
  sse_history: Tuple[float, ...] = ()
  n_iter: int = 0

  @property
  def k(self) -> int:
    return self.centroids.shape[0]


def window_bounds(index: int, before: int, length: int, n: int) -> bool:
  return index - before >= 0 and index - before + length <= n


def extract_waveform(pulse: core.Pulse, s, n_before: int = 15,
                     n_after: int = 14) -> Optional[core.Waveform]:
  """Window `s[p - n_before .. p + n_after]` divided by `s[p]`, or None."""
  p = pulse.index
  length = n_before + n_after + 1
  if not window_bounds(p, n_before, length, len(s)):
    return None
  window = np.asarray(s[p - n_before:p + n_after + 1], dtype=np.float64)
  values = window / window[n_before]
  values[n_before] = 1.0
  return core.Waveform(values, n_before, pulse)


def extract_windows(indexes, s, before: int, length: int
                    ) -> Tuple[np.ndarray, np.ndarray]:
  """Normalized windows for every index that fits; returns (windows, kept)."""
  idx = np.asarray(indexes, dtype=np.int64)
  kept = (idx - before >= 0) & (idx - before + length <= len(s))
  use = idx[kept]
  if len(use) == 0:
    return np.zeros((0, length)), kept
  gather = use[:, None] - before + np.arange(length)[None, :]
  windows = np.asarray(s, dtype=np.float64)[gather]
  windows = windows / windows[:, before:before + 1]
  windows[:, before] = 1.0
  return windows, kept


def sample_pulses(pulses: Sequence[core.Pulse], n_sample: int,
                  seed: Union[int, np.random.Generator]) -> List[core.Pulse]:
  """Uniform sample without replacement, in original order."""
  if len(pulses) <= n_sample:
    return list(pulses)
  rng = np.random.default_rng(seed)
  chosen = np.sort(rng.choice(len(pulses), size=n_sample, replace=False))
  return [pulses[i] for i in chosen]


@jax.jit
def _exact_sq_dists(x, c):
  return jnp.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=-1)


_ASSIGN_CHUNK = 4096


def _assign(x, c) -> Tuple[np.ndarray, np.ndarray]:
  d = np.concatenate([
      np.asarray(_exact_sq_dists(x[i:i + _ASSIGN_CHUNK], c))
      for i in range(0, len(x), _ASSIGN_CHUNK)])
  labels = np.argmin(d, axis=1)
  return labels, d[np.arange(len(x)), labels]


@functools.partial(jax.jit, static_argnames=("k",))
def _cluster_sums(x, labels, *, k: int):
  sums = jax.ops.segment_sum(x, labels, num_segments=k)
  counts = jax.ops.segment_sum(jnp.ones(x.shape[0]), labels, num_segments=k)
  return sums, counts


def kmeans_plusplus_init(x: np.ndarray, k: int,
                         rng: np.random.Generator) -> np.ndarray:
  n = len(x)
  centers = [int(rng.integers(n))]
  d = np.array(_exact_sq_dists(x, x[centers]))[:, 0]
  d[centers[0]] = 0.0
  for _ in range(1, k):
    total = d.sum()
    if total <= 0:
      raise errors.DegenerateInput(
          f"k-means++ ran out of distinct points after {len(centers)} centers",
          k=k, n=n)
    nxt = int(rng.choice(n, p=d / total))
    centers.append(nxt)
    d = np.minimum(d, np.asarray(_exact_sq_dists(x, x[nxt:nxt + 1]))[:, 0])
    d[centers] = 0.0
  return x[centers].copy()


def kmeans_pp(waveforms, k: int, seed: int = 0, max_iter: int = 300,
              tol: float = 1e-6, scope: str = "all") -> ClusterModel:
  """Lloyd's algorithm from k-means++ seeds."""
  x = np.asarray(waveforms, dtype=np.float64)
  n_distinct = len(np.unique(x, axis=0)) if len(x) else 0
  if n_distinct < k:
    raise errors.DegenerateInput(
        f"{n_distinct} distinct waveforms for k={k} in scope {scope}",
        scope=scope, k=k, n_distinct=n_distinct)
  rng = np.random.default_rng(seed)
  c = kmeans_plusplus_init(x, k, rng)
  history = []
  n_iter = 0
  for n_iter in range(1, max_iter + 1):
    labels, d = _assign(x, c)
    history.append(float(d.sum()))
    sums, counts = map(np.asarray, _cluster_sums(x, labels, k=k))
    new_c = c.copy()
    occupied = counts > 0
    new_c[occupied] = sums[occupied] / counts[occupied, None]
    empty = np.flatnonzero(~occupied)
    if len(empty):
      # Re-seed empty clusters at the points farthest from their centroid.
      far = np.argsort(-d, kind="stable")[:len(empty)]
      new_c[empty] = x[far]
      logging.vlog(2, "scope %s: re-seeded %d empty clusters", scope,
                   len(empty))
    movement = float(np.max(np.linalg.norm(new_c - c, axis=1)))
    c = new_c
    logging.vlog(2, "scope %s iteration %d: sse %.6g movement %.3g", scope,
                 n_iter, history[-1], movement)
    if movement < tol:
      break
  _, d = _assign(x, c)
  return ClusterModel(c, scope, seed, float(d.sum()), tuple(history), n_iter)


def assign(model: ClusterModel, waveforms) -> np.ndarray:
  """Nearest-centroid ids, ties to the lowest id."""
  x = np.asarray(waveforms, dtype=np.float64)
  x = x.reshape(-1, model.centroids.shape[1])
  if len(x) == 0:
    return np.zeros((0,), np.int64)
  return _assign(x, model.centroids)[0]


def sse_curve(waveforms, k_list: Sequence[int],
              seeds: Union[int, Sequence[int]] = 5, max_iter: int = 300,
              tol: float = 1e-6) -> List[Tuple[int, float]]:
  """Best-of-restarts SSE per k, normalized by the first entry."""
  if isinstance(seeds, int):
    seeds = range(seeds)
  best = [min(kmeans_pp(waveforms, k, s, max_iter, tol).sse for s in seeds)
          for k in k_list]
  ref = best[0] if best and best[0] > 0 else 1.0
  return [(int(k), v / ref) for k, v in zip(k_list, best)]


def sampled_waveforms(analyses: Sequence[core.FrameAnalysis],
                      cfg: core.PipelineConfig, seed: int
                      ) -> Dict[str, np.ndarray]:
  """Up to `n_sample` waveforms per frame phase, grouped by scope."""
  rng = np.random.default_rng(seed)
  per_phase: List[List[np.ndarray]] = [[] for _ in core.PHASE_NAMES]
  for analysis in analyses:
    for phase, (flat, pulses) in enumerate(zip(analysis.flats,
                                               analysis.pulses)):
      chosen = sample_pulses(pulses, cfg.n_sample, rng)
      windows, _ = extract_windows([p.index for p in chosen], flat.samples,
                                   cfg.n_before, cfg.waveform_length)
      per_phase[phase].append(windows)
  empty = np.zeros((0, cfg.waveform_length))
  out = {name: np.concatenate(w) if w else empty
         for name, w in zip(core.PHASE_NAMES, per_phase)}
  out["all"] = np.concatenate([out[name] for name in core.PHASE_NAMES])
  return out


def fit_all_scopes(analyses: Sequence[core.FrameAnalysis],
                   cfg: core.PipelineConfig,
                   seed: Optional[int] = None,
                   k_phase: Optional[int] = None,
                   k_all: Optional[int] = None) -> Dict[str, ClusterModel]:
  """Per-phase models with `k_phase` and a combined model with `k_all`."""
  seed = cfg.seed if seed is None else seed
  k_phase = k_phase or cfg.k_phase
  k_all = k_all or cfg.k_all
  waveforms = sampled_waveforms(analyses, cfg, seed)
  models = {}
  for i, scope in enumerate(SCOPES):
    k = k_all if scope == "all" else k_phase
    models[scope] = kmeans_pp(waveforms[scope], k, seed + i,
                              cfg.kmeans_max_iter, cfg.kmeans_tol, scope)
    logging.info("scope %s: k=%d on %d waveforms, sse %.4g after %d iterations",
                 scope, k, len(waveforms[scope]), models[scope].sse,
                 models[scope].n_iter)
  return models


def cluster_count_study(analyses: Sequence[core.FrameAnalysis],
                        cfg: core.PipelineConfig,
                        k_pairs: Sequence[Tuple[int, int]],
                        trials: int = 3) -> pd.DataFrame:
  """Refits all scopes for several (k_phase, k_all) pairs and pulse samples."""
  rows = []
  for trial in range(trials):
    for k_phase, k_all in k_pairs:
      models = fit_all_scopes(analyses, cfg, cfg.seed + 1000 * trial,
                              k_phase, k_all)
      row = {"k_phase": k_phase, "k_all": k_all, "trial": trial}
      row.update({f"sse_{scope}": models[scope].sse for scope in SCOPES})
      rows.append(row)
  return pd.DataFrame(rows)


def centroids_frame(model: ClusterModel) -> pd.DataFrame:
  cols = [f"v{i}" for i in range(model.centroids.shape[1])]
  df = pd.DataFrame(model.centroids, columns=cols)
  df.insert(0, "cluster_id", np.arange(model.k))
  df.insert(0, "scope", model.scope)
  return df


def sse_curve_frame(curve: Sequence[Tuple[int, float]],
                    default_k: Optional[int] = None) -> pd.DataFrame:
  df = pd.DataFrame(list(curve), columns=["k", "normalized_sse"])
  df["default"] = df["k"] == default_k
  return df
