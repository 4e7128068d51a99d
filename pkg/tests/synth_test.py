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

import os

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np

from jax_ccfault import core
from jax_ccfault import errors
from jax_ccfault import pipeline
from jax_ccfault import preprocess
from jax_ccfault.data import sigb
from jax_ccfault.data import synth

SMALL = synth.SynthScenario(
    seed=3, n_frames=6, faulty_fraction=0.5, length=40000, pd_count_min=20,
    pd_count_max=40, interference_count_min=10, interference_count_max=20)


class ScenarioTest(parameterized.TestCase):

  def test_parse(self):
    s = synth.parse_scenario("seed=7\nn_frames=12  # small\nlength=8000\n")
    self.assertEqual((s.seed, s.n_frames, s.length), (7, 12, 8000))
    self.assertEqual(s.faulty_fraction, 0.1)

  @parameterized.named_parameters(
      ("fraction", "faulty_fraction=1.5"),
      ("length", "length=1001"),
      ("unknown", "frames=3"),
  )
  def test_invalid(self, text):
    with self.assertRaises(errors.ConfigError):
      synth.parse_scenario(text)

  def test_pulse_shape(self):
    shape = synth.pulse_shape(0, 10.0)
    self.assertLen(shape, synth.PULSE_LENGTH)
    self.assertEqual(shape[0], 10.0)
    self.assertEqual(np.argmax(np.abs(shape)), 0)


class GenerateTest(absltest.TestCase):

  def test_no_faulty(self):
    scenario = synth.SynthScenario(seed=1, n_frames=4, faulty_fraction=0.0,
                                   length=8000, interference_count_min=2,
                                   interference_count_max=4)
    for frame, planted in synth.generate(scenario):
      self.assertFalse(frame.faulty)
      self.assertTrue(all(
          not synth.ARCHETYPES[p.archetype].partial_discharge
          for p in planted))

  def test_faulty_count_and_ids(self):
    out = list(synth.generate(SMALL))
    self.assertEqual(sum(f.faulty for f, _ in out), 3)
    self.assertEqual(out[0][0].id, "synth-3-00000")
    for frame, planted in out:
      core.validate_frame(frame, SMALL.length)
      self.assertEqual(frame.phases.dtype, np.int8)
      if frame.faulty:
        self.assertTrue(any(synth.ARCHETYPES[p.archetype].partial_discharge
                            for p in planted))

  def test_quadrant_bias(self):
    pd_quadrants = []
    for _, planted in synth.generate(SMALL):
      pd_quadrants += [core.quadrant_of(p.aligned_index, SMALL.length)
                       for p in planted
                       if synth.ARCHETYPES[p.archetype].partial_discharge]
    share = np.isin(pd_quadrants, (1, 3)).mean()
    self.assertGreater(share, 0.8)

  def test_raw_and_aligned_indexes(self):
    frame, planted = next(synth.generate(SMALL))
    corrected = preprocess.phase_correct(frame)
    for p in planted[:20]:
      drift = (p.index - p.aligned_index - corrected.shifts[p.phase]) % (
          SMALL.length)
      self.assertLessEqual(min(drift, SMALL.length - drift), 10)

  def test_reproducible_bytes(self):
    d = self.create_tempdir().full_path
    paths = []
    for run in range(2):
      out = os.path.join(d, f"run{run}.sigb")
      sidecar = os.path.join(d, f"run{run}.jsonl")
      self.assertEqual(synth.write_synth(SMALL, out, sidecar), 6)
      paths.append((out, sidecar))
    for a, b in zip(*paths):
      with open(a, "rb") as fa, open(b, "rb") as fb:
        self.assertEqual(fa.read(), fb.read())
    planted = synth.read_sidecar(paths[0][1])
    self.assertEqual(planted, sorted(planted, key=lambda r: (
        r.frame, r.phase, r.index)))
    self.assertEqual(len(sigb.read_sigb(paths[0][0], SMALL.length)), 6)

  def _recall(self, scenario, cfg):
    hits = total = 0
    for frame, planted in synth.generate(scenario):
      analysis = pipeline.analyze_frame(frame, cfg, length=scenario.length)
      found = [set((p.index + flat.phase_shift) % scenario.length
                   for p in phase_pulses)
               for flat, phase_pulses in zip(analysis.flats,
                                             analysis.pulses)]
      for p in planted:
        if abs(p.amplitude) < 10:
          continue
        total += 1
        hits += any((p.index + d) % scenario.length in found[p.phase]
                    for d in range(-3, 4))
    self.assertGreater(total, 100)
    return hits / total

  def test_detector_recall(self):
    # Noise sections overlap 25-fold on SMALL frames, so every pulse fills
    # about 25 of them; per-bin counts keep the pulses out of the background.
    cfg = core.PipelineConfig(noise_scan="bin")
    self.assertGreaterEqual(self._recall(SMALL, cfg), 0.85)

  def test_detector_recall_full_cycle(self):
    scenario = synth.SynthScenario(seed=4, n_frames=3, faulty_fraction=1.0)
    self.assertGreaterEqual(
        self._recall(scenario, core.PipelineConfig()), 0.85)


if __name__ == "__main__":
  absltest.main()
