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

"""Module for a histogram-binned, leaf-wise gradient-boosted tree classifier.

Features are bucketed once into at most `max_bins` rank-based bins. Each tree
is grown leaf-wise on second-order (Newton) statistics of the logistic loss,
split candidates being scored from per-bin gradient/hessian histograms. A row
goes to the left child iff its raw value is `<=` the split threshold.
"""
import dataclasses
import functools

from typing import List, NamedTuple, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from absl import logging

from jax_ccfault import core
from jax_ccfault import errors

# Halvings tried before a tree that cannot lower the training loss is dropped.
_MAX_HALVINGS = 30
_PREDICT_CHUNK = 128


@dataclasses.dataclass(frozen=True)
class GBDTParams:
  num_trees: int = 500
  learning_rate: float = 0.05
  max_leaves: int = 31
  max_depth: int = 0
  min_child_weight: float = 1e-3
  min_data_in_leaf: int = 20
  max_bins: int = 255
  lambda_l2: float = 0.0
  feature_fraction: float = 1.0
  bagging_fraction: float = 1.0
  early_stopping_rounds: int = 50

  @classmethod
  def from_config(cls, cfg: core.PipelineConfig) -> "GBDTParams":
    return cls(cfg.gbdt_num_trees, cfg.gbdt_learning_rate,
               cfg.gbdt_max_leaves, cfg.gbdt_max_depth,
               cfg.gbdt_min_child_weight, cfg.gbdt_min_data_in_leaf,
               cfg.gbdt_max_bins, cfg.gbdt_lambda_l2,
               cfg.gbdt_feature_fraction, cfg.gbdt_bagging_fraction,
               cfg.early_stopping_rounds)


@dataclasses.dataclass(frozen=True)
class Tree:
  """Flat node arrays; `left[i] < 0` marks a leaf."""
  feature: np.ndarray
  threshold: np.ndarray
  left: np.ndarray
  right: np.ndarray
  value: np.ndarray
  gain: np.ndarray

  @property
  def n_nodes(self) -> int:
    return len(self.feature)

  def depth(self) -> int:
    depth = np.zeros(self.n_nodes, dtype=np.int64)
    for i in range(self.n_nodes):
      if self.left[i] >= 0:
        depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
    return int(depth.max(initial=0))


@dataclasses.dataclass(frozen=True)
class BoostedTreeModel:
  base_score: float
  learning_rate: float
  n_features: int
  trees: Tuple[Tree, ...]
  bin_edges: Tuple[np.ndarray, ...] = ()
  train_loss: Tuple[float, ...] = ()
  valid_loss: Tuple[float, ...] = ()
  step_scale: Tuple[float, ...] = ()

  @functools.cached_property
  def forest(self) -> "Forest":
    return stack_forest([self.trees])

  def predict_margin(self, x) -> np.ndarray:
    return self.base_score + forest_margins(self.forest, x)[:, 0]

  def predict_proba(self, x) -> np.ndarray:
    return np.asarray(jax.nn.sigmoid(self.predict_margin(x)))


@jax.jit
def logistic_grad_hess(margin, label):
  p = jax.nn.sigmoid(margin)
  return p - label, p * (1 - p)


@jax.jit
def logloss(margin, label):
  return jnp.mean(jnp.logaddexp(0.0, margin) - label * margin)


def bin_edges(column, max_bins: int = 255) -> np.ndarray:
  """Thresholds halfway between neighbouring distinct values.

  With more distinct values than `max_bins`, cut points are the values at
  evenly spaced ranks, so the binning depends on ranks only.
  """
  col = np.asarray(column, dtype=np.float64)
  u = np.unique(col)
  if len(u) <= 1:
    return np.zeros((0,))
  if len(u) <= max_bins:
    return (u[:-1] + u[1:]) / 2
  cuts = np.unique(np.quantile(col, np.arange(1, max_bins) / max_bins,
                               method="lower"))
  cuts = cuts[cuts < u[-1]]
  above = u[np.searchsorted(u, cuts, side="right")]
  return (cuts + above) / 2


def bin_data(x, edges: Sequence[np.ndarray]) -> np.ndarray:
  x = np.asarray(x, dtype=np.float64)
  return np.stack([np.searchsorted(e, x[:, j], side="left")
                   for j, e in enumerate(edges)], axis=1).astype(np.int64)


@functools.partial(jax.jit, static_argnames=("n_features", "max_bins"))
def _best_split(g_hist, h_hist, c_hist, n_bins, feature_mask, lam,
                min_child_weight, min_data, *, n_features: int, max_bins: int):
  g = g_hist.reshape(n_features, max_bins)
  h = h_hist.reshape(n_features, max_bins)
  c = c_hist.reshape(n_features, max_bins)
  gl, hl, cl = (jnp.cumsum(a, axis=1) for a in (g, h, c))
  gt, ht, ct = gl[:, -1:], hl[:, -1:], cl[:, -1:]
  gr, hr, cr = gt - gl, ht - hl, ct - cl
  gain = gl ** 2 / (hl + lam) + gr ** 2 / (hr + lam) - gt ** 2 / (ht + lam)
  b = jnp.arange(max_bins)[None, :]
  valid = ((b < n_bins[:, None] - 1) & (hl >= min_child_weight)
           & (hr >= min_child_weight) & (cl >= min_data) & (cr >= min_data)
           & feature_mask[:, None])
  gain = jnp.where(valid, gain, -jnp.inf)
  best = jnp.argmax(gain.reshape(-1))
  return best // max_bins, best % max_bins, gain.reshape(-1)[best]


class _Leaf(NamedTuple):
  node: int
  rows: np.ndarray
  hists: Tuple[np.ndarray, np.ndarray, np.ndarray]
  depth: int
  split: Tuple[int, int, float]


class _TreeBuilder:
  """Grows one tree leaf-wise on fixed gradients."""

  def __init__(self, bins: np.ndarray, edges: Sequence[np.ndarray],
               g: np.ndarray, h: np.ndarray, feature_mask: np.ndarray,
               params: GBDTParams):
    self.bins = bins
    self.edges = edges
    self.g, self.h = g, h
    self.params = params
    n_features = bins.shape[1]
    self.n_features = n_features
    self.max_bins = params.max_bins
    self.flat_bins = bins + np.arange(n_features)[None, :] * params.max_bins
    self.n_bins = jnp.asarray([len(e) + 1 for e in edges])
    self.feature_mask = jnp.asarray(feature_mask)
    self.nodes: List[List[float]] = []

  def _hists(self, rows):
    flat = self.flat_bins[rows].ravel()
    size = self.n_features * self.max_bins
    rep = self.n_features
    return (np.bincount(flat, np.repeat(self.g[rows], rep), size),
            np.bincount(flat, np.repeat(self.h[rows], rep), size),
            np.bincount(flat, minlength=size).astype(np.float64))

  def _split(self, hists, depth: int) -> Tuple[int, int, float]:
    p = self.params
    if p.max_depth and depth >= p.max_depth:
      return -1, -1, -np.inf
    j, b, gain = _best_split(*hists, self.n_bins, self.feature_mask,
                             p.lambda_l2, p.min_child_weight,
                             p.min_data_in_leaf, n_features=self.n_features,
                             max_bins=self.max_bins)
    return int(j), int(b), float(gain)

  def _new_node(self, rows) -> int:
    g, h = self.g[rows].sum(), self.h[rows].sum()
    denom = h + self.params.lambda_l2
    # feature, threshold, left, right, value, gain
    self.nodes.append([0, 0.0, -1, -1, -g / denom if denom > 0 else 0.0, 0.0])
    return len(self.nodes) - 1

  def build(self, rows: np.ndarray) -> Optional[Tree]:
    hists = self._hists(rows)
    root = _Leaf(self._new_node(rows), rows, hists, 0, self._split(hists, 0))
    if not root.split[2] > 0:
      return None
    leaves = [root]
    n_leaves = 1
    while n_leaves < self.params.max_leaves:
      best = max(range(len(leaves)),
                 key=lambda i: (leaves[i].split[2], -leaves[i].node))
      leaf = leaves[best]
      j, b, gain = leaf.split
      if not gain > 0:
        break
      leaves.pop(best)
      go_left = self.bins[leaf.rows, j] <= b
      left_rows, right_rows = leaf.rows[go_left], leaf.rows[~go_left]
      if len(left_rows) <= len(right_rows):
        left_h = self._hists(left_rows)
        right_h = tuple(a - c for a, c in zip(leaf.hists, left_h))
      else:
        right_h = self._hists(right_rows)
        left_h = tuple(a - c for a, c in zip(leaf.hists, right_h))
      l_node, r_node = self._new_node(left_rows), self._new_node(right_rows)
      self.nodes[leaf.node][:4] = [j, float(self.edges[j][b]), l_node, r_node]
      self.nodes[leaf.node][5] = gain
      depth = leaf.depth + 1
      leaves.append(_Leaf(l_node, left_rows, left_h, depth,
                          self._split(left_h, depth)))
      leaves.append(_Leaf(r_node, right_rows, right_h, depth,
                          self._split(right_h, depth)))
      n_leaves += 1
    cols = list(zip(*self.nodes))
    return Tree(np.asarray(cols[0], np.int32), np.asarray(cols[1], np.float64),
                np.asarray(cols[2], np.int32), np.asarray(cols[3], np.int32),
                np.asarray(cols[4], np.float64),
                np.asarray(cols[5], np.float64))


def apply_tree(tree: Tree, x: np.ndarray) -> np.ndarray:
  """Leaf value reached by every row of `x`."""
  node = np.zeros(len(x), dtype=np.int64)
  while True:
    active = np.flatnonzero(tree.left[node] >= 0)
    if not len(active):
      return tree.value[node]
    cur = node[active]
    go_left = x[active, tree.feature[cur]] <= tree.threshold[cur]
    node[active] = np.where(go_left, tree.left[cur], tree.right[cur])


def _scaled(tree: Tree, scale: float) -> Tree:
  return dataclasses.replace(tree, value=tree.value * scale)


def fit_gbdt(x, y, params: GBDTParams = GBDTParams(), seed: int = 0,
             valid: Optional[Tuple[np.ndarray, np.ndarray]] = None
             ) -> BoostedTreeModel:
  """Boosts logistic-loss trees; stops early on `valid` when given."""
  x = np.asarray(x, dtype=np.float64)
  y = np.asarray(y, dtype=np.float64)
  n, n_features = x.shape
  n_pos = int(y.sum())
  if n_pos == 0 or n_pos == n:
    raise errors.EmptyClass(f"training labels hold a single class ({n_pos} "
                            f"positive of {n})", positives=n_pos, rows=n)
  rng = np.random.default_rng(seed)
  edges = tuple(bin_edges(x[:, j], params.max_bins) for j in range(n_features))
  bins = bin_data(x, edges)
  prior = n_pos / n
  base = float(np.log(prior / (1 - prior)))

  margin = np.full(n, base)
  loss = float(logloss(margin, y))
  train_loss, valid_loss, scales, trees = [loss], [], [], []
  if valid is not None:
    xv = np.asarray(valid[0], dtype=np.float64)
    yv = np.asarray(valid[1], dtype=np.float64)
    valid_margin = np.full(len(xv), base)
    valid_loss.append(float(logloss(valid_margin, yv)))
    best_loss, best_n = valid_loss[0], 0

  for it in range(params.num_trees):
    g, h = map(np.asarray, logistic_grad_hess(margin, y))
    rows = np.arange(n)
    if params.bagging_fraction < 1:
      size = max(1, int(round(params.bagging_fraction * n)))
      rows = np.sort(rng.choice(n, size=size, replace=False))
    mask = np.ones(n_features, dtype=bool)
    if params.feature_fraction < 1:
      size = max(1, int(round(params.feature_fraction * n_features)))
      mask[:] = False
      mask[rng.choice(n_features, size=size, replace=False)] = True
    tree = _TreeBuilder(bins, edges, g, h, mask, params).build(rows)
    if tree is None:
      logging.vlog(1, "iteration %d: no valid split, stopping", it)
      break
    out = apply_tree(tree, x)
    scale = params.learning_rate
    for _ in range(_MAX_HALVINGS):
      new_margin = margin + scale * out
      new_loss = float(logloss(new_margin, y))
      if new_loss <= loss:
        break
      scale /= 2
    else:
      logging.vlog(1, "iteration %d: tree cannot lower the loss, stopping", it)
      break
    tree = _scaled(tree, scale)
    trees.append(tree)
    scales.append(scale / params.learning_rate)
    margin, loss = new_margin, new_loss
    train_loss.append(loss)
    logging.vlog(2, "iteration %d: %d leaves, train loss %.6f, step %.3g", it,
                 int((tree.left < 0).sum()), loss, scale)
    if valid is not None:
      valid_margin = valid_margin + apply_tree(tree, xv)
      valid_loss.append(float(logloss(valid_margin, yv)))
      if valid_loss[-1] < best_loss:
        best_loss, best_n = valid_loss[-1], len(trees)
      elif len(trees) - best_n >= params.early_stopping_rounds > 0:
        logging.vlog(1, "early stop at %d trees, best %d", len(trees), best_n)
        break

  if valid is not None and params.early_stopping_rounds > 0:
    trees, scales = trees[:best_n], scales[:best_n]
    train_loss, valid_loss = train_loss[:best_n + 1], valid_loss[:best_n + 1]
  logging.vlog(1, "fit %d trees, train loss %.5f", len(trees), train_loss[-1])
  return BoostedTreeModel(base, params.learning_rate, n_features, tuple(trees),
                          edges, tuple(train_loss), tuple(valid_loss),
                          tuple(scales))


def feature_importance(model: BoostedTreeModel) -> np.ndarray:
  """Total split gain per feature."""
  gains = np.zeros(model.n_features)
  for tree in model.trees:
    internal = tree.left >= 0
    np.add.at(gains, tree.feature[internal], tree.gain[internal])
  return gains


class Forest(NamedTuple):
  """Trees of one or more models padded into (n_trees, max_nodes) arrays."""
  feature: np.ndarray
  threshold: np.ndarray
  left: np.ndarray
  right: np.ndarray
  value: np.ndarray
  member: np.ndarray
  n_members: int
  depth: int


def stack_forest(members: Sequence[Sequence[Tree]]) -> Forest:
  trees = [t for m in members for t in m]
  member = np.array([i for i, m in enumerate(members) for _ in m], np.int32)
  width = max([t.n_nodes for t in trees], default=1)
  shape = (len(trees), width)
  feature = np.zeros(shape, np.int32)
  threshold = np.zeros(shape, np.float64)
  left = np.full(shape, -1, np.int32)
  right = np.full(shape, -1, np.int32)
  value = np.zeros(shape, np.float64)
  for i, t in enumerate(trees):
    k = t.n_nodes
    feature[i, :k], threshold[i, :k] = t.feature, t.threshold
    left[i, :k], right[i, :k], value[i, :k] = t.left, t.right, t.value
  depth = max([t.depth() for t in trees], default=0)
  return Forest(feature, threshold, left, right, value, member, len(members),
                depth)


@functools.partial(jax.jit, static_argnames=("depth", "n_members"))
def _forest_member_sums(x, feature, threshold, left, right, value, member, *,
                        depth: int, n_members: int):
  tree = jnp.arange(feature.shape[0])[None, :]
  node = jnp.zeros((x.shape[0], feature.shape[0]), jnp.int32)

  def step(_, node):
    xv = jnp.take_along_axis(x, feature[tree, node], axis=1)
    nxt = jnp.where(xv <= threshold[tree, node], left[tree, node],
                    right[tree, node])
    return jnp.where(left[tree, node] < 0, node, nxt)

  node = jax.lax.fori_loop(0, depth, step, node)
  leaf = value[tree, node]
  return jax.ops.segment_sum(leaf.T, member, num_segments=n_members).T


def forest_margins(forest: Forest, x) -> np.ndarray:
  """Per-member sum of tree outputs, shape (n_rows, n_members)."""
  x = np.atleast_2d(np.asarray(x, dtype=np.float64))
  if len(forest.member) == 0:
    return np.zeros((len(x), forest.n_members))
  arrays = [jnp.asarray(a) for a in forest[:6]]
  out = [np.asarray(_forest_member_sums(
      x[i:i + _PREDICT_CHUNK], *arrays, depth=forest.depth,
      n_members=forest.n_members)) for i in range(0, len(x), _PREDICT_CHUNK)]
  return np.concatenate(out) if out else np.zeros((0, forest.n_members))
