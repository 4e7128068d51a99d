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

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np

from jax_ccfault import core
from jax_ccfault import errors
from jax_ccfault import preprocess

N = 8000


def _sine(shift=0, n=N, amplitude=1.0):
  t = np.arange(n)
  return amplitude * np.sin(2 * np.pi * (t - shift) / n)


def _lstsq_kernel(window, order):
  half = (window - 1) // 2
  z = np.arange(-half, half + 1, dtype=np.float64)
  vander = np.vander(z, order + 1, increasing=True)
  # Value of the fitted polynomial at z = 0 for a unit impulse at each tap.
  return np.array([np.linalg.lstsq(vander, np.eye(window)[i], rcond=None)[0][0]
                   for i in range(window)])


class SavGolTest(parameterized.TestCase):

  def setUp(self):
    super().setUp()
    preprocess.clear_caches()

  def test_five_point_quadratic(self):
    k = preprocess.savgol_kernel(5, 2)
    np.testing.assert_allclose(k.coefficients,
                               np.array([-3, 12, 17, 12, -3]) / 35,
                               rtol=0, atol=1e-12)

  @parameterized.named_parameters(
      ("w7_o2", 7, 2),
      ("w21_o4", 21, 4),
      ("w99_o3", 99, 3),
  )
  def test_matches_least_squares(self, window, order):
    np.testing.assert_allclose(
        preprocess.savgol_kernel(window, order).coefficients,
        _lstsq_kernel(window, order), rtol=0, atol=1e-10)

  def test_sums_to_one(self):
    self.assertAlmostEqual(preprocess.savgol_kernel(99, 3).coefficients.sum(),
                           1.0, delta=1e-12)

  @parameterized.named_parameters(
      ("even", 4, 2),
      ("order_too_high", 5, 5),
      ("negative_order", 5, -1),
  )
  def test_invalid_window(self, window, order):
    with self.assertRaises(errors.InvalidWindow):
      preprocess.savgol_kernel(window, order)

  def test_cached(self):
    self.assertIs(preprocess.savgol_kernel(99, 3),
                  preprocess.savgol_kernel(99, 3))


class FlattenTest(absltest.TestCase):

  def test_constant(self):
    out = preprocess.flatten(np.full(1000, 7.0),
                             preprocess.savgol_kernel(99, 3))
    np.testing.assert_allclose(out, 0.0, atol=1e-9)

  def test_cubic_interior(self):
    t = np.arange(2000) / 2000
    x = 3 + 20 * t - 35 * t ** 2 + 12 * t ** 3
    out = preprocess.flatten(x, preprocess.savgol_kernel(99, 3))
    np.testing.assert_allclose(out[49:-49], 0.0, atol=1e-6)

  def test_spike_survives(self):
    n = core.SAMPLES_PER_CYCLE
    x = 40 * _sine(n=n)
    x[40000] += 20
    out = preprocess.flatten(x, preprocess.savgol_kernel(99, 3))
    self.assertAlmostEqual(out[40000], 20, delta=2)
    baseline = np.abs(np.delete(out, np.arange(39950, 40051)))
    self.assertLess(baseline.max(), 1.0)

  def test_linear(self):
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 3000))
    k = preprocess.savgol_kernel(99, 3)
    np.testing.assert_allclose(
        preprocess.flatten(2 * a - 3 * b, k),
        2 * preprocess.flatten(a, k) - 3 * preprocess.flatten(b, k),
        atol=1e-9)

  def test_too_short(self):
    with self.assertRaises(errors.InvalidWindow):
      preprocess.flatten(np.zeros(30), preprocess.savgol_kernel(99, 3))


class PhaseTest(parameterized.TestCase):

  def test_sine_is_aligned(self):
    self.assertAlmostEqual(preprocess.fundamental_phase(_sine()), 0.0,
                           delta=1e-9)
    self.assertEqual(preprocess.fundamental_shift(_sine()), 0)

  def test_cosine_quarter_cycle(self):
    n = core.SAMPLES_PER_CYCLE
    cosine = np.cos(2 * np.pi * np.arange(n) / n)
    self.assertAlmostEqual(preprocess.fundamental_phase(cosine), np.pi / 2,
                           delta=1e-9)
    self.assertEqual(preprocess.fundamental_shift(cosine), 600000)

  @parameterized.named_parameters(
      ("zeros", np.zeros(N)),
      ("constant", np.full(N, 3.0)),
  )
  def test_zero_fundamental(self, x):
    with self.assertRaises(errors.ZeroFundamental):
      preprocess.fundamental_phase(x)

  def test_delayed_sine(self):
    n = core.SAMPLES_PER_CYCLE
    x = _sine(shift=200000, n=n)
    frame = core.SignalFrame("d", np.stack([x, x, x]))
    out = preprocess.phase_correct(frame)
    self.assertEqual(out.shifts, (200000,) * 3)
    for p in out.phases:
      self.assertLessEqual(abs(preprocess.fundamental_phase(p)), 1e-3)

  def test_random_phases(self):
    rng = np.random.default_rng(1)
    for _ in range(100):
      shifts = rng.integers(0, N, size=3)
      amplitudes = rng.uniform(1, 60, size=3)
      phases = np.stack([_sine(s, amplitude=a)
                         for s, a in zip(shifts, amplitudes)])
      out = preprocess.phase_correct(core.SignalFrame("r", phases))
      for p in out.phases:
        self.assertLessEqual(abs(preprocess.fundamental_phase(p)), 1e-3)
      np.testing.assert_array_equal(out.shifts, shifts)

  def test_idempotent(self):
    rng = np.random.default_rng(2)
    phases = np.stack([_sine(s) + rng.normal(0, 0.1, N)
                       for s in (10, 2000, 5000)])
    once = preprocess.phase_correct(core.SignalFrame("i", phases))
    twice = preprocess.phase_correct(once)
    for a, b in zip(once.shifts, twice.shifts):
      self.assertIn((b - a) % N, (0, 1, N - 1))

  def test_preprocess_frame(self):
    rng = np.random.default_rng(3)
    phases = np.stack([np.rint(40 * _sine(s) + rng.normal(0, 1, N))
                       for s in (0, N // 3, 2 * N // 3)]).astype(np.int8)
    frame = core.SignalFrame("p", phases)
    corrected, flats = preprocess.preprocess_frame(frame,
                                                   core.PipelineConfig())
    self.assertLen(flats, 3)
    self.assertEqual(corrected.phases.dtype, np.int8)
    for flat, shift in zip(flats, corrected.shifts):
      self.assertEqual(flat.phase_shift, shift)
      self.assertGreater(flat.noise_level, 0)
      self.assertLen(flat.samples, N)

  def test_preprocess_aligned_keeps_samples(self):
    phases = np.stack([_sine(100)] * 3)
    corrected, _ = preprocess.preprocess_frame(
        core.SignalFrame("a", phases), core.PipelineConfig(), aligned=True)
    np.testing.assert_array_equal(corrected.phases, phases)


if __name__ == "__main__":
  absltest.main()
