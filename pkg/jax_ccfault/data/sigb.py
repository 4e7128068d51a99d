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

"""Module for the SIGB container of raw three-phase int8 frames.

Layout (little-endian): b"SIGB", u16 version, u32 frame count, then per frame
a u16 id length, the UTF-8 id, three label bytes (0, 1 or 255 for unknown)
and three phases of int8 samples.
"""
import os
import struct

from typing import BinaryIO, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors

MAGIC = b"SIGB"
VERSION = 1
UNKNOWN_LABEL = 255
_HEADER = struct.Struct("<4sHI")
_ID_LEN = struct.Struct("<H")
_COUNT_OFFSET = 6


def encode_labels(labels: Optional[Tuple[Optional[bool], ...]]) -> bytes:
  if labels is None:
    labels = (None,) * core.N_PHASES
  return bytes(UNKNOWN_LABEL if l is None else int(bool(l)) for l in labels)


def decode_labels(raw: bytes) -> Optional[Tuple[Optional[bool], ...]]:
  if all(b == UNKNOWN_LABEL for b in raw):
    return None
  return tuple(None if b == UNKNOWN_LABEL else bool(b) for b in raw)


def encode_frame(frame: core.SignalFrame, length: int) -> bytes:
  core.validate_frame(frame, length)
  ident = frame.id.encode("utf-8")
  phases = np.asarray(frame.phases)
  if phases.dtype != np.int8:
    if np.any((phases < -128) | (phases > 127)):
      raise ValueError(f"frame {frame.id!r} does not fit in int8")
    phases = phases.astype(np.int8)
  return (_ID_LEN.pack(len(ident)) + ident + encode_labels(frame.labels)
          + np.ascontiguousarray(phases).tobytes())


class SigbWriter:
  """Streams frames into a SIGB file, patching the frame count on close.

  An exception inside the block removes the partial file.
  """

  def __init__(self, path: str, length: int = core.SAMPLES_PER_CYCLE):
    self.path = path
    self.length = length
    self.count = 0
    self._file: Optional[BinaryIO] = None

  def __enter__(self) -> "SigbWriter":
    self._file = open(self.path, "wb")
    self._file.write(_HEADER.pack(MAGIC, VERSION, 0))
    return self

  def write(self, frame: core.SignalFrame) -> None:
    self._file.write(encode_frame(frame, self.length))
    self.count += 1

  def __exit__(self, exc_type, exc, tb) -> None:
    if exc_type is not None:
      self._file.close()
      os.remove(self.path)
      logging.warning("aborted write to %s after %d frames", self.path,
                      self.count)
      return
    self._file.seek(_COUNT_OFFSET)
    self._file.write(struct.pack("<I", self.count))
    self._file.close()
    logging.vlog(1, "wrote %d frames to %s", self.count, self.path)


def write_sigb(path: str, frames: Iterable[core.SignalFrame],
               length: int = core.SAMPLES_PER_CYCLE) -> int:
  with SigbWriter(path, length) as writer:
    for frame in frames:
      writer.write(frame)
  return writer.count


def _read_exact(f: BinaryIO, n: int, frame: int, what: str) -> bytes:
  raw = f.read(n)
  if len(raw) != n:
    raise errors.Truncated(f"frame {frame} cut short while reading {what}",
                           frame=frame, expected=n, got=len(raw))
  return raw


def read_header(f: BinaryIO) -> int:
  raw = f.read(_HEADER.size)
  if len(raw) < 4 or raw[:4] != MAGIC:
    raise errors.BadMagic(f"not a SIGB container: magic {raw[:4]!r}",
                          magic=raw[:4].hex())
  if len(raw) < _HEADER.size:
    raise errors.Truncated("SIGB header cut short", frame=-1, got=len(raw))
  _, version, count = _HEADER.unpack(raw)
  if version != VERSION:
    raise errors.BadVersion(f"SIGB version {version}, expected {VERSION}",
                            version=version, expected=VERSION)
  return count


def iter_sigb(path: str, length: int = core.SAMPLES_PER_CYCLE
              ) -> Iterator[core.SignalFrame]:
  """Yields frames one at a time."""
  with open(path, "rb") as f:
    count = read_header(f)
    for i in range(count):
      (id_len,) = _ID_LEN.unpack(_read_exact(f, _ID_LEN.size, i, "id length"))
      ident = _read_exact(f, id_len, i, "id").decode("utf-8")
      labels = decode_labels(_read_exact(f, core.N_PHASES, i, "labels"))
      raw = _read_exact(f, core.N_PHASES * length, i, "samples")
      phases = np.frombuffer(raw, dtype=np.int8).reshape(core.N_PHASES, length)
      yield core.SignalFrame(ident, phases.copy(), labels)


def read_sigb(path: str, length: int = core.SAMPLES_PER_CYCLE
              ) -> List[core.SignalFrame]:
  return list(iter_sigb(path, length))


def count_frames(path: str) -> int:
  with open(path, "rb") as f:
    return read_header(f)
