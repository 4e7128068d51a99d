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

"""Module for borderline minority oversampling guided by a linear SVM."""
import dataclasses
import fractions
import math

from typing import NamedTuple, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors


@dataclasses.dataclass(frozen=True)
class OversampleConfig:
  alpha: float = 0.15
  neighbors: int = 5
  svm_epochs: int = 20
  svm_lambda: float = 1e-3

  def __post_init__(self):
    if not 0 < self.alpha < 1:
      raise errors.ConfigError(f"alpha must lie in (0, 1), got {self.alpha}",
                               field="smote_alpha")

  @classmethod
  def from_config(cls, cfg: core.PipelineConfig,
                  alpha: float = None) -> "OversampleConfig":
    return cls(cfg.smote_alpha if alpha is None else alpha,
               cfg.smote_neighbors, cfg.svm_epochs, cfg.svm_lambda)


class Oversampled(NamedTuple):
  x: np.ndarray
  y: np.ndarray
  synthetic: np.ndarray


def target_minority(alpha: float, n_majority: int) -> int:
  """`ceil(alpha * n_majority)` with alpha taken at its decimal value."""
  return math.ceil(fractions.Fraction(repr(float(alpha))) * n_majority)


@jax.jit
def _pegasos(x, y, order, lam):
  """Hinge-loss subgradient steps on rows `order`, bias as a feature."""
  xb = jnp.concatenate([x, jnp.ones((x.shape[0], 1))], axis=1)

  def step(w, inputs):
    t, i = inputs
    eta = 1.0 / (lam * t)
    xi, yi = xb[i], y[i]
    hit = yi * jnp.dot(w, xi) < 1
    w = (1 - eta * lam) * w + jnp.where(hit, eta * yi, 0.0) * xi
    return w, None

  steps = jnp.arange(1, order.shape[0] + 1, dtype=jnp.float64)
  w, _ = jax.lax.scan(step, jnp.zeros(xb.shape[1]), (steps, order))
  return w[:-1], w[-1]


def fit_linear_svm(x, y_pm, epochs: int, lam: float,
                   rng: np.random.Generator) -> Tuple[np.ndarray, float]:
  n = len(x)
  order = np.concatenate([rng.permutation(n) for _ in range(epochs)])
  w, b = _pegasos(jnp.asarray(x), jnp.asarray(y_pm, dtype=jnp.float64),
                  jnp.asarray(order), lam)
  return np.asarray(w), float(b)


@jax.jit
def _sq_dists(a, b):
  return jnp.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)


def smote_svm(x, y, cfg: OversampleConfig = OversampleConfig(),
              seed: int = 0) -> Oversampled:
  """Adds synthetic faulty rows until faulty = ceil(alpha * non-faulty).

  Base points are minority rows inside the SVM margin band `|w.x + b| <= 1`;
  each synthetic row lies on the segment between a base point and one of its
  nearest minority neighbours.
  """
  x = np.asarray(x, dtype=np.float64)
  y = np.asarray(y).astype(np.int64)
  minority = np.flatnonzero(y == 1)
  n_major = int((y == 0).sum())
  if len(minority) < 2:
    raise errors.TooFewMinority(
        f"{len(minority)} faulty rows, need at least 2",
        minority=len(minority))
  n_new = max(0, target_minority(cfg.alpha, n_major) - len(minority))
  if n_new == 0:
    return Oversampled(x, y, np.zeros(len(y), dtype=bool))

  rng = np.random.default_rng(seed)
  mean, std = x.mean(axis=0), x.std(axis=0)
  xs = (x - mean) / np.where(std > 0, std, 1.0)
  w, b = fit_linear_svm(xs, 2 * y - 1, cfg.svm_epochs, cfg.svm_lambda, rng)
  score = xs[minority] @ w + b
  border = np.flatnonzero(np.abs(score) <= 1)
  if len(border) == 0:
    logging.warning("no faulty rows inside the SVM margin; using all %d",
                    len(minority))
    border = np.arange(len(minority))

  k = min(cfg.neighbors, len(minority) - 1)
  d = np.array(_sq_dists(xs[minority[border]], xs[minority]))
  d[np.arange(len(border)), border] = np.inf
  neighbors = np.argsort(d, axis=1, kind="stable")[:, :k]

  cycle = rng.permutation(len(border))
  base = cycle[np.arange(n_new) % len(border)]
  pick = neighbors[base, rng.integers(0, k, size=n_new)]
  lam = rng.uniform(size=(n_new, 1))
  x_base = x[minority[border[base]]]
  x_nb = x[minority[pick]]
  synth = x_base + lam * (x_nb - x_base)
  logging.info("smote-svm: %d borderline of %d faulty rows, %d synthetic rows",
               len(border), len(minority), n_new)
  return Oversampled(np.vstack([x, synth]),
                     np.concatenate([y, np.ones(n_new, dtype=np.int64)]),
                     np.concatenate([np.zeros(len(y), bool),
                                     np.ones(n_new, bool)]))
