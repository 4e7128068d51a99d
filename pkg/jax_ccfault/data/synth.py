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

"""Module for generating labelled synthetic three-phase recordings.

Each phase is a 50 Hz sine (phases 120 degrees apart, common random offset)
plus Gaussian noise plus planted pulses. Faulty frames receive partial
discharge bursts concentrated in quadrants one and three; every frame receives
interference pulses concentrated in quadrants two and four. Every planted
pulse is listed in a JSON-lines sidecar.
"""
import dataclasses
import json

from typing import Any, Dict, Iterator, List, NamedTuple, Tuple

import numpy as np

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors
from jax_ccfault.data import sigb


class Archetype(NamedTuple):
  name: str
  frequency_hz: float
  decay: float
  partial_discharge: bool


# Damped cosines peaking at their onset sample; decay is in samples.
ARCHETYPES = (
    Archetype("pd_2mhz", 2e6, 6.0, True),
    Archetype("pd_5mhz", 5e6, 4.0, True),
    Archetype("pd_8mhz", 8e6, 3.0, True),
    Archetype("interference_1mhz", 1e6, 12.0, False),
    Archetype("interference_3mhz", 3e6, 20.0, False),
    Archetype("interference_10mhz", 10e6, 2.0, False),
)
PULSE_LENGTH = 64


@dataclasses.dataclass(frozen=True)
class SynthScenario:
  seed: int = 0
  n_frames: int = 100
  faulty_fraction: float = 0.1
  noise_sigma: float = 1.0
  fundamental_amplitude: float = 40.0
  length: int = core.SAMPLES_PER_CYCLE
  pd_count_min: int = 10
  pd_count_max: int = 40
  pd_amplitude_min: float = 5.0
  pd_amplitude_max: float = 30.0
  pd_quadrant_bias: float = 0.9
  interference_count_min: int = 5
  interference_count_max: int = 25
  interference_amplitude_min: float = 5.0
  interference_amplitude_max: float = 30.0
  interference_quadrant_bias: float = 0.8
  min_spacing: int = 100

  def __post_init__(self):
    if not 0 <= self.faulty_fraction <= 1:
      raise errors.ConfigError(
          f"faulty_fraction must lie in [0, 1], got {self.faulty_fraction}",
          field="faulty_fraction")
    if self.length % 4:
      raise errors.ConfigError(
          f"length must be a multiple of 4, got {self.length}",
          field="length")


def parse_scenario(text: str) -> SynthScenario:
  return core.parse_key_values(text, SynthScenario)


def load_scenario(path: str) -> SynthScenario:
  with open(path) as f:
    return parse_scenario(f.read())


def pulse_shape(archetype: int, amplitude: float,
                length: int = PULSE_LENGTH) -> np.ndarray:
  a = ARCHETYPES[archetype]
  t = np.arange(length, dtype=np.float64)
  return amplitude * np.exp(-t / a.decay) * np.cos(
      2 * np.pi * a.frequency_hz * t / core.SAMPLE_RATE_HZ)


class PlantedPulse(NamedTuple):
  frame: str
  phase: int
  index: int
  aligned_index: int
  amplitude: float
  archetype: int


def _place(rng: np.random.Generator, n: int, length: int, quadrants,
           bias: float, taken: List[int], spacing: int) -> List[int]:
  """Aligned onsets, `bias` of them inside `quadrants`, at least `spacing`
  samples apart from each other and from `taken`."""
  quarter = length // 4
  out = []
  occupied = np.zeros(length, dtype=bool)
  for t in taken:
    occupied[max(0, t - spacing + 1):t + spacing] = True
  for _ in range(50 * n):
    if len(out) == n:
      break
    if rng.uniform() < bias:
      q = quadrants[rng.integers(len(quadrants))]
      i = int((q - 1) * quarter + rng.integers(quarter))
    else:
      i = int(rng.integers(length))
    if i + PULSE_LENGTH > length or occupied[i]:
      continue
    out.append(i)
    occupied[max(0, i - spacing + 1):i + spacing] = True
  if len(out) < n:
    logging.warning("placed %d of %d pulses; the phase is too crowded",
                    len(out), n)
  return out


def generate_frame(scenario: SynthScenario, frame_id: str, faulty: bool,
                   rng: np.random.Generator
                   ) -> Tuple[core.SignalFrame, List[PlantedPulse]]:
  n = scenario.length
  offset = int(rng.integers(n))
  t = np.arange(n)
  phases = np.zeros((core.N_PHASES, n), dtype=np.int8)
  planted = []
  for p in range(core.N_PHASES):
    shift = (offset + p * n // core.N_PHASES) % n
    signal = scenario.fundamental_amplitude * np.sin(
        2 * np.pi * ((t - shift) % n) / n)
    signal += rng.normal(0.0, scenario.noise_sigma, n)
    taken: List[int] = []
    batches = []
    if faulty:
      count = rng.integers(scenario.pd_count_min, scenario.pd_count_max + 1)
      onsets = _place(rng, int(count), n, (1, 3), scenario.pd_quadrant_bias,
                      taken, scenario.min_spacing)
      taken += onsets
      batches.append((onsets, (0, 1, 2), scenario.pd_amplitude_min,
                      scenario.pd_amplitude_max))
    count = rng.integers(scenario.interference_count_min,
                         scenario.interference_count_max + 1)
    onsets = _place(rng, int(count), n, (2, 4),
                    scenario.interference_quadrant_bias, taken,
                    scenario.min_spacing)
    batches.append((onsets, (3, 4, 5), scenario.interference_amplitude_min,
                    scenario.interference_amplitude_max))
    for onsets, kinds, lo, hi in batches:
      for aligned in onsets:
        kind = int(kinds[rng.integers(len(kinds))])
        amplitude = float(rng.uniform(lo, hi)) * rng.choice((-1.0, 1.0))
        raw = (aligned + shift) % n
        idx = (raw + np.arange(PULSE_LENGTH)) % n
        signal[idx] += pulse_shape(kind, amplitude)
        planted.append(PlantedPulse(frame_id, p, int(raw), int(aligned),
                                    amplitude, kind))
    phases[p] = np.clip(np.rint(signal), -128, 127).astype(np.int8)
  frame = core.SignalFrame(frame_id, phases, (faulty,) * core.N_PHASES)
  return frame, sorted(planted, key=lambda r: (r.phase, r.index))


def generate(scenario: SynthScenario
             ) -> Iterator[Tuple[core.SignalFrame, List[PlantedPulse]]]:
  """Yields frames in order; the output depends only on the scenario."""
  rng = np.random.default_rng(scenario.seed)
  n_faulty = int(round(scenario.faulty_fraction * scenario.n_frames))
  faulty = np.zeros(scenario.n_frames, dtype=bool)
  faulty[rng.permutation(scenario.n_frames)[:n_faulty]] = True
  for i in range(scenario.n_frames):
    yield generate_frame(scenario, f"synth-{scenario.seed}-{i:05d}",
                         bool(faulty[i]), rng)


def pulse_record(pulse: PlantedPulse) -> Dict[str, Any]:
  record = pulse._asdict()
  record["archetype_name"] = ARCHETYPES[pulse.archetype].name
  return record


def write_synth(scenario: SynthScenario, out_path: str,
                sidecar_path: str) -> int:
  """Writes the SIGB dataset and its ground-truth sidecar."""
  n_pulses = 0
  with sigb.SigbWriter(out_path, scenario.length) as writer, \
      open(sidecar_path, "w") as sidecar:
    for frame, planted in generate(scenario):
      writer.write(frame)
      for pulse in planted:
        sidecar.write(json.dumps(pulse_record(pulse), sort_keys=True) + "\n")
      n_pulses += len(planted)
  logging.info("synthesized %d frames with %d planted pulses", writer.count,
               n_pulses)
  return writer.count


def read_sidecar(path: str) -> List[PlantedPulse]:
  out = []
  with open(path) as f:
    for line in f:
      if line.strip():
        record = json.loads(line)
        out.append(PlantedPulse(*(record[k] for k in PlantedPulse._fields)))
  return out
