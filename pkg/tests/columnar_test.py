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
import pandas as pd

from jax_ccfault import errors
from jax_ccfault.data import columnar
from jax_ccfault.data import sigb

LENGTH = 400


class ColumnarTest(parameterized.TestCase):

  def setUp(self):
    super().setUp()
    self.dir = self.create_tempdir().full_path
    self.meta = pd.DataFrame({
        "signal_id": [10, 11, 12, 13, 14, 15],
        "id_measurement": [2, 2, 2, 1, 1, 1],
        "phase": [0, 1, 2, 2, 0, 1],
        "target": [0, 1, 0, 0, 0, 0],
    })
    rng = np.random.default_rng(0)
    self.samples = rng.integers(-128, 128, size=(LENGTH, 6)).astype(np.int8)

  def _write_meta(self, meta):
    path = os.path.join(self.dir, "metadata.csv")
    meta.to_csv(path, index=False)
    return path

  def _write_parquet(self):
    path = os.path.join(self.dir, "signals.parquet")
    pd.DataFrame({str(s): self.samples[:, i]
                  for i, s in enumerate(self.meta["signal_id"])}).to_parquet(
                      path, index=False)
    return path

  def _write_npy(self):
    path = os.path.join(self.dir, "signals.npy")
    np.save(path, self.samples)
    return path

  def _column(self, signal_id):
    return self.samples[:, list(self.meta["signal_id"]).index(signal_id)]

  @parameterized.parameters("parquet", "npy")
  def test_groups_measurements(self, kind):
    meta_path = self._write_meta(self.meta)
    samples_path = (self._write_parquet() if kind == "parquet"
                    else self._write_npy())
    frames = list(columnar.iter_columnar(meta_path, samples_path, LENGTH))
    self.assertEqual([f.id for f in frames], ["1", "2"])
    first, second = frames
    # Measurement 1 lists its phases out of order.
    np.testing.assert_array_equal(first.phases[0], self._column(14))
    np.testing.assert_array_equal(first.phases[1], self._column(15))
    np.testing.assert_array_equal(first.phases[2], self._column(13))
    self.assertEqual(first.labels, (False, False, False))
    self.assertFalse(first.faulty)
    self.assertEqual(second.labels, (False, True, False))
    self.assertTrue(second.faulty)

  def test_unknown_labels(self):
    meta_path = self._write_meta(self.meta.drop(columns=["target"]))
    frames = list(columnar.iter_columnar(meta_path, self._write_npy(),
                                         LENGTH))
    self.assertTrue(all(f.labels is None for f in frames))

  def test_import_to_sigb(self):
    meta_path = self._write_meta(self.meta)
    out = os.path.join(self.dir, "train.sigb")
    n = columnar.import_columnar(meta_path, self._write_parquet(), out,
                                 LENGTH)
    self.assertEqual(n, 2)
    back = sigb.read_sigb(out, LENGTH)
    np.testing.assert_array_equal(back[1].phases[1], self._column(11))

  def test_missing_phase(self):
    meta_path = self._write_meta(self.meta.iloc[:5])
    with self.assertRaises(errors.MissingPhase):
      list(columnar.iter_columnar(meta_path, self._write_npy(), LENGTH))

  def test_label_conflict(self):
    extra = pd.DataFrame({"signal_id": [11], "id_measurement": [2],
                          "phase": [1], "target": [0]})
    meta_path = self._write_meta(pd.concat([self.meta, extra]))
    with self.assertRaises(errors.LabelConflict):
      list(columnar.iter_columnar(meta_path, self._write_parquet(), LENGTH))

  def test_missing_column(self):
    meta_path = self._write_meta(self.meta.drop(columns=["phase"]))
    with self.assertRaises(errors.ConfigError):
      columnar.read_metadata(meta_path)

  def test_wrong_length(self):
    meta_path = self._write_meta(self.meta)
    with self.assertRaises(errors.WrongLength):
      list(columnar.iter_columnar(meta_path, self._write_npy(), LENGTH * 2))


if __name__ == "__main__":
  absltest.main()
