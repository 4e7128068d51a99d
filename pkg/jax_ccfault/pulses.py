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

"""Module for pulse identification on flattened signals.

Detection runs in two stages. Stage one collects candidates: three passes each
split a masked copy of `|s|` into `n_sort` equal sections, keep the `n_top`
largest indexes of every section (ties to the lowest index), then zero a
`+-n_mask` neighbourhood around each kept index before the next pass.
Stage two keeps candidates that are the maximum of `|s|` over `+-n_local`,
relocates them to an earlier opposite-polarity sample where one is large
enough, and gates the result by amplitude.
"""
import functools

from typing import List, Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np
import pandas as pd

from absl import logging

from jax_ccfault import core

N_PASSES = 3


def top_indexes(values: np.ndarray, n_top: int) -> np.ndarray:
  """Indexes of the `n_top` largest values, ties going to the lowest index."""
  n = len(values)
  if n <= n_top:
    return np.argsort(-values, kind="stable")
  kth = np.partition(values, n - n_top)[n - n_top]
  above = np.flatnonzero(values > kth)
  ties = np.flatnonzero(values == kth)[:n_top - len(above)]
  return np.concatenate([above, ties])


def mask_around(s_mask: np.ndarray, indexes: np.ndarray, n_mask: int) -> None:
  """Zeroes `+-n_mask` samples around every index, in place."""
  n = len(s_mask)
  delta = np.zeros(n + 1, dtype=np.int64)
  np.add.at(delta, np.clip(indexes - n_mask, 0, n), 1)
  np.add.at(delta, np.clip(indexes + n_mask + 1, 0, n), -1)
  s_mask[np.cumsum(delta[:-1]) > 0] = 0


def stage1_candidates(s, n_sort: int = 20, n_top: int = 100,
                      n_mask: int = 50) -> np.ndarray:
  """Candidate indexes in pick order; may repeat an index across passes."""
  s_mask = np.abs(np.asarray(s, dtype=np.float64))
  n = len(s_mask)
  bounds = (np.arange(n_sort + 1, dtype=np.int64) * n) // n_sort
  picked = []
  for _ in range(N_PASSES):
    # Every section of a pass is ranked before any of its picks are masked.
    tops = [top_indexes(s_mask[lo:hi], n_top) + lo
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if not tops:
      break
    picked += tops
    mask_around(s_mask, np.concatenate(tops), n_mask)
  if not picked:
    return np.zeros((0,), np.int64)
  return np.concatenate(picked).astype(np.int64)


@functools.partial(jax.jit, static_argnames=("radius",))
def _window_max(s_abs, *, radius: int):
  return jax.lax.reduce_window(
      s_abs, -jnp.inf, jax.lax.max, (2 * radius + 1,), (1,),
      [(radius, radius)])


def local_maxima_mask(s_abs, candidates, n_local: int) -> np.ndarray:
  """True where `s_abs[p]` is the maximum over `[p - n_local, p + n_local]`."""
  wmax = np.asarray(_window_max(jnp.asarray(s_abs), radius=n_local))
  return s_abs[candidates] == wmax[candidates]


def _cond(s, p: int, i: int, c_mag: float) -> bool:
  q = p - i
  if q < 0:
    return False
  return s[q] * s[p] < 0 and abs(s[q]) > c_mag * abs(s[p])


def relocate(s, p: int, c_mag: float = 0.5) -> int:
  """Moves an anchor to an earlier opposite-polarity sample if one qualifies."""
  while _cond(s, p, 1, c_mag):
    p -= 1
  if _cond(s, p, 2, c_mag):
    p -= 2
  elif _cond(s, p, 3, c_mag):
    p -= 3
  return p


def verify_and_relocate(p: int, s, s_abs, n_local: int, c_mag: float,
                        a: float, cap: float = 50.0,
                        is_local_max: Optional[bool] = None) -> Optional[int]:
  """Final anchor of candidate `p`, or None if rejected."""
  if is_local_max is None:
    lo, hi = max(p - n_local, 0), p + n_local + 1
    is_local_max = s_abs[p] == s_abs[lo:hi].max()
  if not is_local_max:
    return None
  p = relocate(s, int(p), c_mag)
  if a < s_abs[p] < cap:
    return p
  return None


def detect_pulses(flat: core.FlatSignal, cfg: core.PipelineConfig,
                  phase: int = 0) -> List[core.Pulse]:
  s = np.asarray(flat.samples, dtype=np.float64)
  s_abs = np.abs(s)
  candidates = np.unique(stage1_candidates(s, cfg.n_sort, cfg.n_top,
                                           cfg.n_mask))
  keep = local_maxima_mask(s_abs, candidates, cfg.n_local)
  final = set()
  for p in candidates[keep]:
    q = verify_and_relocate(int(p), s, s_abs, cfg.n_local, cfg.c_mag,
                            flat.noise_level, cfg.amplitude_cap,
                            is_local_max=True)
    if q is not None:
      final.add(q)
  pulses = [core.Pulse(phase, q, float(s[q]), float(s_abs[q]),
                       int(core.quadrant_of(q, len(s))))
            for q in sorted(final)]
  logging.vlog(1, "phase %s: %d candidates, %d local maxima, %d pulses",
               core.PHASE_NAMES[phase], len(candidates), int(keep.sum()),
               len(pulses))
  return pulses


def pulses_frame(frame_ids: Sequence[str],
                 pulses: Sequence[Sequence[Sequence[core.Pulse]]]
                 ) -> pd.DataFrame:
  """Diagnostic table of (frame, phase, index, amplitude, quadrant) rows."""
  rows = [(fid, p.phase_name, p.index, p.amplitude, p.quadrant)
          for fid, per_phase in zip(frame_ids, pulses)
          for phase_pulses in per_phase for p in phase_pulses]
  return pd.DataFrame(rows, columns=["frame", "phase", "index", "amplitude",
                                     "quadrant"])
