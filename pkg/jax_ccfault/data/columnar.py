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

"""Module for importing the public competition layout.

The layout is a metadata CSV with one row per signal (`signal_id`,
`id_measurement`, `phase`, and `target` for labelled data) and a sample
matrix with one int8 column per signal. Parquet matrices name their columns
by signal id; `.npy` matrices hold the signals in metadata row order.
"""
from typing import Dict, Iterator, Optional

import numpy as np
import pandas as pd
import pyarrow.parquet as pq

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors
from jax_ccfault.data import sigb

REQUIRED_COLUMNS = ("signal_id", "id_measurement", "phase")


def read_metadata(path: str) -> pd.DataFrame:
  meta = pd.read_csv(path)
  missing = [c for c in REQUIRED_COLUMNS if c not in meta.columns]
  if missing:
    raise errors.ConfigError(f"metadata {path} lacks columns {missing}",
                             path=path, missing=missing)
  if "target" not in meta.columns:
    meta["target"] = np.nan
  return meta


def _signal_labels(meta: pd.DataFrame) -> Dict[int, Optional[bool]]:
  labels: Dict[int, Optional[bool]] = {}
  for signal_id, targets in meta.groupby("signal_id")["target"]:
    known = set(targets.dropna().astype(int).tolist())
    if len(known) > 1:
      raise errors.LabelConflict(f"signal {signal_id} has targets "
                                 f"{sorted(known)}", signal_id=int(signal_id))
    labels[int(signal_id)] = bool(known.pop()) if known else None
  return labels


def _measurement_signals(meta: pd.DataFrame) -> Dict[int, np.ndarray]:
  """Signal ids of each measurement ordered by phase."""
  out = {}
  rows = meta.drop_duplicates(["signal_id"])
  for measurement, group in rows.groupby("id_measurement", sort=True):
    phases = sorted(group["phase"].astype(int).tolist())
    if phases != list(range(core.N_PHASES)):
      raise errors.MissingPhase(
          f"measurement {measurement} has phases {phases}",
          measurement=int(measurement), phases=phases)
    out[int(measurement)] = group.sort_values("phase")["signal_id"].to_numpy()
  return out


class _Samples:
  """Column access to a parquet or .npy sample matrix."""

  def __init__(self, path: str, meta: pd.DataFrame):
    self.path = path
    if path.endswith(".npy"):
      self._matrix = np.load(path, mmap_mode="r")
      self._position = {int(s): i for i, s in enumerate(meta["signal_id"])}
      self._parquet = None
    else:
      self._matrix = None
      self._parquet = pq.ParquetFile(path)

  def phases(self, signal_ids) -> np.ndarray:
    if self._matrix is not None:
      cols = [self._position[int(s)] for s in signal_ids]
      return np.ascontiguousarray(self._matrix[:, cols].T).astype(np.int8)
    table = self._parquet.read(columns=[str(int(s)) for s in signal_ids])
    return np.stack([table.column(i).to_numpy() for i in range(
        table.num_columns)]).astype(np.int8)


def iter_columnar(metadata_path: str, samples_path: str,
                  length: int = core.SAMPLES_PER_CYCLE
                  ) -> Iterator[core.SignalFrame]:
  """Yields one SignalFrame per measurement, in measurement id order."""
  meta = read_metadata(metadata_path)
  labels = _signal_labels(meta)
  groups = _measurement_signals(meta)
  samples = _Samples(samples_path, meta)
  logging.info("importing %d measurements (%d signals) from %s", len(groups),
               len(labels), samples_path)
  for measurement, signal_ids in groups.items():
    phases = samples.phases(signal_ids)
    frame_labels = tuple(labels[int(s)] for s in signal_ids)
    if all(l is None for l in frame_labels):
      frame_labels = None
    yield core.validate_frame(
        core.SignalFrame(str(measurement), phases, frame_labels), length)


def import_columnar(metadata_path: str, samples_path: str, out_path: str,
                    length: int = core.SAMPLES_PER_CYCLE) -> int:
  """Converts the competition layout into a SIGB container."""
  return sigb.write_sigb(out_path, iter_columnar(metadata_path, samples_path,
                                                 length), length)
