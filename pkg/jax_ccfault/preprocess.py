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

"""Module for phase-angle correction and Savitzky-Golay flattening."""
import dataclasses
import functools

from typing import Tuple

import jax
import jax.numpy as jnp
import numpy as np

from jax._src.util import safe_map, safe_zip

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors
from jax_ccfault import noise

map, unsafe_map = safe_map, map
zip, unsafe_zip = safe_zip, zip

# Relative size below which the power-frequency bin is treated as absent.
_ZERO_FUNDAMENTAL_RTOL = 1e-9


@dataclasses.dataclass(frozen=True)
class SavGolKernel:
  coefficients: np.ndarray
  window: int
  order: int

  @property
  def half_width(self) -> int:
    return (self.window - 1) // 2


@jax.jit
def _fundamental_bin(x):
  n = x.shape[0]
  phase = -2j * jnp.pi * jnp.arange(n, dtype=jnp.float64) / n
  return jnp.sum(x * jnp.exp(phase)), jnp.sqrt(jnp.mean(x * x))


def fundamental_phase(samples) -> float:
  """Phase of the one-cycle DFT bin, measured against a zero-phase sine.

  A pure `sin(2*pi*n/N)` gives 0 and `cos(2*pi*n/N)` gives pi/2.
  """
  x = np.asarray(samples, dtype=np.float64)
  x1, rms = _fundamental_bin(x)
  x1, rms = complex(x1), float(rms)
  magnitude = 2 * abs(x1) / len(x)
  if rms == 0 or magnitude <= _ZERO_FUNDAMENTAL_RTOL * rms:
    raise errors.ZeroFundamental(
        f"fundamental magnitude {magnitude:.3g} too small for RMS {rms:.3g}",
        magnitude=magnitude, rms=rms)
  return float(np.angle(1j * x1))


def fundamental_shift(samples) -> int:
  """Circular shift in [0, N) that moves the fundamental's zero to sample 0."""
  n = len(samples)
  phi = fundamental_phase(samples)
  return int(round(-phi * n / (2 * np.pi))) % n


def phase_correct(frame: core.SignalFrame) -> core.SignalFrame:
  shifts = tuple(fundamental_shift(p) for p in frame.phases)
  phases = np.stack([np.roll(p, -s) for p, s in zip(frame.phases, shifts)])
  total = tuple((s0 + s) % len(p) for s0, s, p in
                zip(frame.shifts, shifts, frame.phases))
  return frame.replace(phases=phases, shifts=total)


@functools.lru_cache(maxsize=None)
def savgol_kernel(window: int, order: int) -> SavGolKernel:
  """Least-squares polynomial smoothing coefficients for the window center."""
  if window < 1 or window % 2 == 0:
    raise errors.InvalidWindow(f"window must be odd and positive, got {window}",
                               window=window, order=order)
  if order < 0 or order >= window:
    raise errors.InvalidWindow(
        f"order must lie in [0, window), got order={order} window={window}",
        window=window, order=order)
  half = (window - 1) // 2
  # Scaled abscissae; the fitted value at z = 0 does not depend on the scale.
  z = np.arange(-half, half + 1, dtype=np.float64) / max(half, 1)
  vander = np.vander(z, order + 1, increasing=True)
  coefficients = np.linalg.pinv(vander)[0]
  coefficients.setflags(write=False)
  return SavGolKernel(coefficients, window, order)


def clear_caches():
  savgol_kernel.cache_clear()


@jax.jit
def _flatten(x, coefficients):
  half = (coefficients.shape[0] - 1) // 2
  padded = jnp.pad(x, half, mode="reflect")
  smooth = jnp.convolve(padded, coefficients[::-1], mode="valid",
                        precision=jax.lax.Precision.HIGHEST)
  return x - smooth


def flatten(samples, kernel: SavGolKernel) -> np.ndarray:
  """Signal minus its Savitzky-Golay smoothed version, mirror-padded."""
  x = np.asarray(samples, dtype=np.float64)
  if len(x) <= kernel.half_width:
    raise errors.InvalidWindow(
        f"signal of {len(x)} samples is shorter than half the window",
        window=kernel.window, length=len(x))
  return np.asarray(_flatten(x, jnp.asarray(kernel.coefficients)))


def preprocess_frame(frame: core.SignalFrame, cfg: core.PipelineConfig,
                     aligned: bool = False
                     ) -> Tuple[core.SignalFrame, Tuple[core.FlatSignal, ...]]:
  """Phase-corrects a frame, then flattens and noise-levels each phase.

  `aligned` frames were corrected before (e.g. read back from a preprocessed
  container) and keep their samples as they are.
  """
  corrected = frame if aligned else phase_correct(frame)
  kernel = savgol_kernel(cfg.sg_window, cfg.sg_order)
  flats = []
  for phase, shift in zip(list(corrected.phases), list(corrected.shifts)):
    s = flatten(phase, kernel)
    flats.append(core.FlatSignal(s, noise.noise_level(s, cfg), int(shift)))
  logging.vlog(1, "frame %s: shifts %s, noise levels %s", frame.id,
               corrected.shifts, [f.noise_level for f in flats])
  return corrected, tuple(flats)
