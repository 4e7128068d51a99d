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

"""Module for estimating the background noise level of a flattened phase.

The signal is covered by `n_noise` equidistant sections of `l_noise` samples
(consecutive sections may overlap). The maximum absolute value of each section
is histogrammed into bins of width `step` over `(0, c_max]`, and the bins are
scanned from the top. The first bin holding more than `n_cover` section maxima
sets the level: its upper edge plus one bin of margin.

Two counting modes are offered. `"cumulative"`, the default, counts the maxima
above each bin's lower edge, which makes the level monotone in the maxima.
`"bin"` counts the maxima inside each bin; it is not monotone (raising a few
maxima out of a triggering bin can move the trigger down).
"""
import functools

import jax
import jax.numpy as jnp
import numpy as np

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors


def section_starts(length: int, n_noise: int, l_noise: int) -> np.ndarray:
  if l_noise > length:
    raise errors.SectionOverflow(
        f"noise sections of {l_noise} samples exceed signal length {length}",
        l_noise=l_noise, length=length)
  starts = (np.arange(n_noise, dtype=np.int64) * length) // n_noise
  return np.minimum(starts, length - l_noise)


@functools.partial(jax.jit, static_argnames=("l_noise",))
def _section_max(s, starts, *, l_noise: int):
  s_abs = jnp.abs(s)
  take = lambda start: jnp.max(jax.lax.dynamic_slice(s_abs, (start,),
                                                     (l_noise,)))
  return jax.vmap(take)(starts)


def section_maxima(s, n_noise: int, l_noise: int) -> np.ndarray:
  """Maximum absolute value of each of the `n_noise` sections of `s`."""
  s = np.asarray(s, dtype=np.float64)
  starts = section_starts(len(s), n_noise, l_noise)
  return np.asarray(_section_max(s, starts, l_noise=l_noise))


def bin_counts(maxima, c_max: float, step: float,
               scan: str = "cumulative") -> np.ndarray:
  """Counts per bin `(j*step, (j+1)*step]`, `j = 0 .. c_max/step - 1`."""
  n_bins = int(round(c_max / step))
  m = np.asarray(maxima, dtype=np.float64)
  m = m[m > 0]
  if scan == "cumulative":
    lower = np.arange(n_bins) * step
    return (m[None, :] > lower[:, None]).sum(axis=1)
  if scan != "bin":
    raise ValueError(f"unknown noise scan mode {scan!r}")
  m = m[m <= c_max]
  idx = np.ceil(m / step).astype(np.int64) - 1
  return np.bincount(np.clip(idx, 0, n_bins - 1), minlength=n_bins)


def estimate_noise_level(maxima, n_cover: int = 80, c_max: float = 15.0,
                         step: float = 0.5, descending: bool = True,
                         scan: str = "cumulative") -> float:
  counts = bin_counts(maxima, c_max, step, scan)
  order = range(len(counts) - 1, -1, -1) if descending else range(len(counts))
  for j in order:
    if counts[j] > n_cover:
      return (j + 1) * step + step
  return step


def noise_level(s, cfg: core.PipelineConfig) -> float:
  maxima = section_maxima(s, cfg.n_noise, cfg.l_noise)
  a = estimate_noise_level(maxima, cfg.n_cover, cfg.c_max, cfg.c_step,
                           cfg.c_step_descending, cfg.noise_scan)
  logging.vlog(1, "noise level %.2f (max section maximum %.2f)", a,
               float(maxima.max(initial=0.0)))
  return a
