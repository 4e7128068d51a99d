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

"""Module for the shared data model and pipeline configuration."""
from __future__ import annotations

import dataclasses
import os
import typing

from typing import Any, Dict, NamedTuple, Optional, Tuple, Type, TypeVar, Union

import numpy as np

from jax_ccfault import errors

SAMPLES_PER_CYCLE = 800000
SAMPLE_RATE_HZ = 40e6
N_PHASES = 3
PHASE_NAMES = ("A", "B", "C")
QUADRANT_LENGTH = SAMPLES_PER_CYCLE // 4
CONFIG_ENV_VAR = "CCFAULT_CONFIG"

T = TypeVar("T")


def cdiv(a: int, b: int) -> int:
  return -(-a // b)


def quadrant_of(index: Union[int, np.ndarray],
                length: int = SAMPLES_PER_CYCLE) -> Union[int, np.ndarray]:
  """Quadrant 1..4 of a phase-corrected sample index."""
  return 1 + (index * 4) // length


@dataclasses.dataclass(frozen=True)
class SignalFrame:
  """One three-phase, one-cycle recording in raw int8 ADC units.

  `labels` holds one entry per phase: True (faulty), False, or None when
  unknown (test data). `shifts` is the circular shift already applied to each
  phase by phase correction.
  """
  id: str
  phases: np.ndarray
  labels: Optional[Tuple[Optional[bool], ...]] = None
  shifts: Tuple[int, ...] = (0, 0, 0)

  sample_rate = SAMPLE_RATE_HZ

  @property
  def faulty(self) -> Optional[bool]:
    if self.labels is None or all(l is None for l in self.labels):
      return None
    return any(bool(l) for l in self.labels if l is not None)

  def replace(self, **kwargs) -> SignalFrame:
    return dataclasses.replace(self, **kwargs)


@dataclasses.dataclass(frozen=True)
class FlatSignal:
  samples: np.ndarray
  noise_level: float
  phase_shift: int


class Pulse(NamedTuple):
  phase: int
  index: int
  amplitude: float
  height: float
  quadrant: int

  @property
  def phase_name(self) -> str:
    return PHASE_NAMES[self.phase]


class Waveform(NamedTuple):
  values: np.ndarray
  anchor_offset: int
  source: Pulse


class FrameAnalysis(NamedTuple):
  """Everything the feature builder needs from one preprocessed frame."""
  frame_id: str
  flats: Tuple[FlatSignal, ...]
  pulses: Tuple[Tuple[Pulse, ...], ...]
  faulty: Optional[bool] = None

  @property
  def n_pulses(self) -> int:
    return sum(len(p) for p in self.pulses)


def validate_frame(frame: SignalFrame,
                   length: int = SAMPLES_PER_CYCLE) -> SignalFrame:
  """Checks the SignalFrame shape invariants and returns the frame."""
  phases = frame.phases
  if len(phases) != N_PHASES:
    raise errors.WrongPhaseCount(
        f"frame {frame.id!r} has {len(phases)} phases, expected {N_PHASES}",
        frame=frame.id, phases=len(phases))
  for i, p in enumerate(phases):
    if np.ndim(p) != 1 or len(p) != length:
      raise errors.WrongLength(
          f"frame {frame.id!r} phase {PHASE_NAMES[i]} has shape "
          f"{np.shape(p)}, expected ({length},)",
          frame=frame.id, phase=i, length=int(np.size(p)))
  if frame.labels is not None and len(frame.labels) != N_PHASES:
    raise errors.WrongPhaseCount(
        f"frame {frame.id!r} has {len(frame.labels)} labels",
        frame=frame.id, labels=len(frame.labels))
  return frame


# # Configuration

_NOISE_SCANS = ("bin", "cumulative")
_VARIANTS = ("I", "II", "III")
_FEATURE_SETS = ("full", "all_pulse", "cluster")
_PROBABILITY_MODES = ("margin", "probability")

# Fields allowed to be zero: seeds/thread counts, regularizers and switches.
_NON_NEGATIVE = frozenset({
    "seed", "threads", "gbdt_lambda_l2", "gbdt_max_depth",
    "early_stopping_rounds"})


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
  """Every hyperparameter of the pipeline with its reference default."""
  # Savitzky-Golay flattening.
  sg_window: int = 99
  sg_order: int = 3
  # Noise level estimation.
  n_noise: int = 1000
  l_noise: int = 1000
  n_cover: int = 80
  c_max: float = 15.0
  c_step: float = 0.5
  c_step_descending: bool = True
  noise_scan: str = "cumulative"
  # Pulse identification.
  n_sort: int = 20
  n_top: int = 100
  n_mask: int = 50
  n_local: int = 25
  c_mag: float = 0.5
  amplitude_cap: float = 50.0
  # Waveform clustering.
  n_sample: int = 100
  n_before: int = 15
  n_after: int = 14
  k_phase: int = 6
  k_all: int = 15
  kmeans_max_iter: int = 300
  kmeans_tol: float = 1e-6
  # Features.
  template_window: int = 50
  n_templates: int = 8
  template_clusters: Tuple[int, ...] = ()
  n_segments: int = 20
  # Classifier.
  variant: str = "II"
  feature_set: str = "full"
  ensemble_seeds: int = 25
  folds: int = 5
  gbdt_num_trees: int = 500
  gbdt_learning_rate: float = 0.05
  gbdt_max_leaves: int = 31
  gbdt_max_depth: int = 0
  gbdt_min_child_weight: float = 1e-3
  gbdt_min_data_in_leaf: int = 20
  gbdt_max_bins: int = 255
  gbdt_lambda_l2: float = 0.0
  gbdt_feature_fraction: float = 1.0
  gbdt_bagging_fraction: float = 1.0
  early_stopping_rounds: int = 50
  probability_mode: str = "margin"
  threshold_step: float = 0.001
  # Oversampling.
  smote_alpha: float = 0.15
  smote_neighbors: int = 5
  svm_epochs: int = 20
  svm_lambda: float = 1e-3
  # Execution.
  seed: int = 0
  threads: int = 0

  def __post_init__(self):
    for f in dataclasses.fields(self):
      value = getattr(self, f.name)
      if isinstance(value, bool) or not isinstance(value, (int, float)):
        continue
      if f.name in _NON_NEGATIVE:
        if value < 0:
          raise errors.ConfigError(f"{f.name} must be >= 0, got {value}",
                                   field=f.name)
      elif not value > 0:
        raise errors.ConfigError(f"{f.name} must be positive, got {value}",
                                 field=f.name)
    if self.n_before + self.n_after + 1 != 30:
      raise errors.ConfigError(
          "n_before + n_after + 1 must equal 30, got "
          f"{self.n_before + self.n_after + 1}", field="n_after")
    if self.template_window != 50:
      raise errors.ConfigError("template_window must be 50",
                               field="template_window")
    if self.template_clusters and (
        len(self.template_clusters) != self.n_templates):
      raise errors.ConfigError(
          f"template_clusters needs {self.n_templates} cluster ids, got "
          f"{len(self.template_clusters)}", field="template_clusters")
    if any(not 0 <= c < self.k_all for c in self.template_clusters):
      raise errors.ConfigError("template_clusters ids must lie in [0, k_all)",
                               field="template_clusters")
    if not 0 < self.smote_alpha < 1:
      raise errors.ConfigError("smote_alpha must lie in (0, 1)",
                               field="smote_alpha")
    for name, allowed in (("noise_scan", _NOISE_SCANS),
                          ("variant", _VARIANTS),
                          ("feature_set", _FEATURE_SETS),
                          ("probability_mode", _PROBABILITY_MODES)):
      if getattr(self, name) not in allowed:
        raise errors.ConfigError(
            f"{name} must be one of {allowed}, got {getattr(self, name)!r}",
            field=name)

  replace = dataclasses.replace

  @property
  def waveform_length(self) -> int:
    return self.n_before + self.n_after + 1


def _format_value(value: Any) -> str:
  if isinstance(value, tuple):
    return ",".join(_format_value(v) for v in value)
  if isinstance(value, bool):
    return "true" if value else "false"
  if isinstance(value, float):
    return repr(value)
  return str(value)


def _parse_value(name: str, text: str, tp: Any) -> Any:
  try:
    if tp is bool:
      if text.lower() not in ("true", "false", "1", "0"):
        raise ValueError(text)
      return text.lower() in ("true", "1")
    if tp is int:
      return int(text)
    if tp is float:
      return float(text)
    if tp is str:
      return text
    if typing.get_origin(tp) is tuple:
      elem, = set(typing.get_args(tp)) - {Ellipsis}
      return tuple(_parse_value(name, t.strip(), elem)
                   for t in text.split(",") if t.strip())
  except ValueError as e:
    raise errors.ConfigError(f"cannot parse {name}={text!r}: {e}",
                             field=name) from e
  raise errors.ConfigError(f"unsupported config type for {name}", field=name)


def dump_key_values(record: Any) -> str:
  """Writes a dataclass as flat `key=value` lines in field order."""
  lines = [f"{f.name}={_format_value(getattr(record, f.name))}"
           for f in dataclasses.fields(record)]
  return "\n".join(lines) + "\n"


def parse_key_values(text: str, cls: Type[T], base: Optional[T] = None) -> T:
  """Parses flat `key=value` text into `cls`; missing keys keep `base`."""
  types = typing.get_type_hints(cls)
  values: Dict[str, Any] = {}
  for lineno, raw in enumerate(text.splitlines(), 1):
    line = raw.split("#", 1)[0].strip()
    if not line:
      continue
    if "=" not in line:
      raise errors.ConfigError(f"line {lineno}: expected key=value",
                               line=lineno)
    key, value = (s.strip() for s in line.split("=", 1))
    if key not in types:
      raise errors.ConfigError(f"line {lineno}: unknown key {key!r}",
                               line=lineno, field=key)
    values[key] = _parse_value(key, value, types[key])
  return dataclasses.replace(base if base is not None else cls(), **values)


def dump_config(cfg: PipelineConfig) -> str:
  return dump_key_values(cfg)


def parse_config(text: str, base: Optional[PipelineConfig] = None
                 ) -> PipelineConfig:
  return parse_key_values(text, PipelineConfig, base)


def save_config(cfg: PipelineConfig, path: str) -> None:
  with open(path, "w") as fp:
    fp.write(dump_config(cfg))


def load_config(path: Optional[str] = None,
                overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
  """Loads `path`, else `$CCFAULT_CONFIG`, else defaults; then overrides."""
  path = path or os.environ.get(CONFIG_ENV_VAR)
  cfg = PipelineConfig()
  if path:
    with open(path) as fp:
      cfg = parse_config(fp.read())
  if overrides:
    cfg = cfg.replace(**overrides)
  return cfg
