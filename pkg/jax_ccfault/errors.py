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

"""Module for the exceptions raised by the fault detection pipeline."""
import json

from typing import Any, Dict


class CCFaultError(Exception):
  """Base class for pipeline errors with a stable, machine-readable code."""
  code = "CCFaultError"

  def __init__(self, message: str, **details: Any):
    super().__init__(message)
    self.message = message
    self.details: Dict[str, Any] = details

  def to_json(self) -> str:
    return json.dumps({"error": self.code, "message": self.message,
                       "details": self.details}, sort_keys=True, default=str)


class WrongLength(CCFaultError):
  """A phase does not hold one full cycle."""
  code = "WrongLength"


class WrongPhaseCount(CCFaultError):
  """A frame does not hold three phases."""
  code = "WrongPhaseCount"


class ZeroFundamental(CCFaultError):
  """The 50 Hz component is too small to align on."""
  code = "ZeroFundamental"


class InvalidWindow(CCFaultError):
  """Savitzky-Golay window/order combination is unusable."""
  code = "InvalidWindow"


class SectionOverflow(CCFaultError):
  """Noise sections are longer than the signal."""
  code = "SectionOverflow"


class DegenerateInput(CCFaultError):
  """Too few distinct waveforms for the requested k."""
  code = "DegenerateInput"


class ClusterEmpty(CCFaultError):
  """A selected cluster has no members."""
  code = "ClusterEmpty"


class EmptyClass(CCFaultError):
  """Training labels hold a single class."""
  code = "EmptyClass"


class TooFewMinority(CCFaultError):
  """Fewer than two minority rows to interpolate between."""
  code = "TooFewMinority"


class ManifestMismatch(CCFaultError):
  """Feature names do not match the model manifest."""
  code = "ManifestMismatch"


class BadMagic(CCFaultError):
  """Container does not start with its magic."""
  code = "BadMagic"


class BadVersion(CCFaultError):
  """Container version is not supported."""
  code = "BadVersion"


class Truncated(CCFaultError):
  """Container ends before its declared content."""
  code = "Truncated"


class MissingPhase(CCFaultError):
  """A measurement does not have all three phases."""
  code = "MissingPhase"


class LabelConflict(CCFaultError):
  """A phase has contradicting labels in the metadata."""
  code = "LabelConflict"


class ConfigError(CCFaultError):
  """Configuration is malformed or invalid."""
  code = "ConfigError"


def error_payload(e: BaseException) -> str:
  """Serializes any exception into the CLI's stderr JSON shape."""
  if isinstance(e, CCFaultError):
    return e.to_json()
  return json.dumps({"error": "Internal", "message": str(e),
                     "details": {"type": type(e).__name__}}, sort_keys=True)
