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
import jax.numpy as jnp
import numpy as np

from jax_ccfault import errors
from jax_ccfault import metrics
from jax_ccfault.model import gbdt

FAST = gbdt.GBDTParams(num_trees=50, learning_rate=0.3, min_data_in_leaf=1,
                       early_stopping_rounds=0)


def _separable(n=200, seed=0):
  rng = np.random.default_rng(seed)
  x = rng.uniform(-1, 1, size=(n, 2))
  s = x[:, 0] + 0.5 * x[:, 1]
  keep = np.abs(s) > 0.1
  return x[keep], (s[keep] > 0).astype(np.int64)


class LossTest(parameterized.TestCase):

  def test_at_zero(self):
    g, h = gbdt.logistic_grad_hess(jnp.zeros(1), jnp.ones(1))
    self.assertAlmostEqual(float(g[0]), -0.5)
    self.assertAlmostEqual(float(h[0]), 0.25)

  def test_saturation(self):
    g, h = gbdt.logistic_grad_hess(jnp.full(1, 40.0), jnp.ones(1))
    self.assertLess(abs(float(g[0])), 1e-12)
    self.assertLess(float(h[0]), 1e-12)

  @parameterized.parameters((-3.0, 0.0), (-0.4, 1.0), (0.7, 0.0), (2.5, 1.0))
  def test_finite_differences(self, m, y):
    eps = 1e-5
    loss = lambda v: float(gbdt.logloss(jnp.array([v]), jnp.array([y])))
    g, h = gbdt.logistic_grad_hess(jnp.array([m]), jnp.array([y]))
    self.assertAlmostEqual(float(g[0]), (loss(m + eps) - loss(m - eps))
                           / (2 * eps), places=7)
    fd_h = (loss(m + eps) - 2 * loss(m) + loss(m - eps)) / eps ** 2
    self.assertAlmostEqual(float(h[0]), fd_h, places=4)


class BinningTest(absltest.TestCase):

  def test_midpoints(self):
    np.testing.assert_allclose(gbdt.bin_edges([3.0, 1.0, 2.0, 1.0]),
                               [1.5, 2.5])

  def test_constant(self):
    self.assertEmpty(gbdt.bin_edges(np.full(10, 4.0)))

  def test_capped(self):
    x = np.random.default_rng(0).normal(size=5000)
    edges = gbdt.bin_edges(x, 16)
    self.assertLessEqual(len(edges), 15)
    self.assertTrue(np.all(np.diff(edges) > 0))

  def test_rank_only(self):
    x = np.random.default_rng(1).normal(size=(3000, 1))
    a = gbdt.bin_data(x, [gbdt.bin_edges(x[:, 0], 32)])
    y = x ** 3
    b = gbdt.bin_data(y, [gbdt.bin_edges(y[:, 0], 32)])
    np.testing.assert_array_equal(a, b)

  def test_bins_follow_edges(self):
    edges = [np.array([1.5, 2.5])]
    np.testing.assert_array_equal(
        gbdt.bin_data([[1.0], [1.5], [2.0], [3.0]], edges)[:, 0],
        [0, 0, 1, 2])


class FitTest(absltest.TestCase):

  def test_separable(self):
    x, y = _separable()
    model = gbdt.fit_gbdt(x, y, FAST)
    self.assertLessEqual(len(model.trees), 50)
    pred = model.predict_proba(x) >= 0.5
    self.assertEqual(metrics.mcc(metrics.confusion(pred, y == 1)), 1.0)

  def test_constant_features(self):
    x = np.ones((40, 3))
    y = np.array([1] * 10 + [0] * 30)
    model = gbdt.fit_gbdt(x, y, FAST)
    self.assertEmpty(model.trees)
    np.testing.assert_allclose(model.predict_proba(x), 0.25)

  def test_memorizes_random_labels(self):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(100, 5))
    y = rng.integers(0, 2, 100)
    params = gbdt.GBDTParams(num_trees=300, learning_rate=0.3,
                             min_data_in_leaf=1, early_stopping_rounds=0)
    model = gbdt.fit_gbdt(x, y, params)
    self.assertLess(model.train_loss[-1], 0.01)
    margin = model.predict_margin(x)
    self.assertAlmostEqual(float(gbdt.logloss(margin, y)),
                           model.train_loss[-1], places=9)

  def test_loss_non_increasing(self):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(300, 4))
    y = (x[:, 0] + rng.normal(0, 1, 300) > 0).astype(int)
    model = gbdt.fit_gbdt(x, y, FAST)
    self.assertTrue(np.all(np.diff(model.train_loss) <= 0))
    self.assertLen(model.train_loss, len(model.trees) + 1)
    self.assertLen(model.step_scale, len(model.trees))
    self.assertTrue(all(0 < s <= 1 for s in model.step_scale))

  def test_early_stopping_keeps_best(self):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(400, 4))
    y = (x[:, 0] + rng.normal(0, 2, 400) > 0).astype(int)
    params = gbdt.GBDTParams(num_trees=200, learning_rate=0.3,
                             min_data_in_leaf=1, early_stopping_rounds=10)
    model = gbdt.fit_gbdt(x[:300], y[:300], params,
                          valid=(x[300:], y[300:]))
    self.assertEqual(model.valid_loss[-1], min(model.valid_loss))
    self.assertLen(model.valid_loss, len(model.trees) + 1)
    self.assertLess(len(model.trees), 200)

  def test_single_class(self):
    with self.assertRaises(errors.EmptyClass):
      gbdt.fit_gbdt(np.zeros((5, 2)), np.ones(5), FAST)

  def test_deterministic(self):
    x, y = _separable(seed=5)
    params = gbdt.GBDTParams(num_trees=20, learning_rate=0.3,
                             min_data_in_leaf=1, feature_fraction=0.5,
                             bagging_fraction=0.8, early_stopping_rounds=0)
    a = gbdt.fit_gbdt(x, y, params, seed=9).predict_margin(x)
    b = gbdt.fit_gbdt(x, y, params, seed=9).predict_margin(x)
    np.testing.assert_array_equal(a, b)

  def test_max_depth(self):
    x, y = _separable(seed=6)
    params = gbdt.GBDTParams(num_trees=10, learning_rate=0.3,
                             min_data_in_leaf=1, max_depth=2,
                             early_stopping_rounds=0)
    model = gbdt.fit_gbdt(x, y, params)
    self.assertTrue(all(t.depth() <= 2 for t in model.trees))


class PredictTest(absltest.TestCase):

  def test_forest_matches_tree_walk(self):
    x, y = _separable(seed=7)
    model = gbdt.fit_gbdt(x, y, FAST)
    walked = model.base_score + sum(gbdt.apply_tree(t, x) for t in model.trees)
    np.testing.assert_allclose(model.predict_margin(x), walked, atol=1e-12)

  def test_stacked_members(self):
    x, y = _separable(seed=8)
    a = gbdt.fit_gbdt(x, y, FAST)
    b = gbdt.fit_gbdt(x, y, gbdt.GBDTParams(num_trees=3, learning_rate=0.1,
                                            min_data_in_leaf=5,
                                            early_stopping_rounds=0))
    margins = gbdt.forest_margins(gbdt.stack_forest([a.trees, b.trees]), x)
    self.assertEqual(margins.shape, (len(x), 2))
    np.testing.assert_allclose(margins[:, 0] + a.base_score,
                               a.predict_margin(x), atol=1e-12)
    np.testing.assert_allclose(margins[:, 1] + b.base_score,
                               b.predict_margin(x), atol=1e-12)

  def test_importance(self):
    rng = np.random.default_rng(9)
    x = rng.normal(size=(300, 3))
    x[:, 2] = 1.0
    y = (x[:, 0] > 0).astype(int)
    gains = gbdt.feature_importance(gbdt.fit_gbdt(x, y, FAST))
    self.assertEqual(gains[2], 0)
    self.assertGreaterEqual(gains[0] / gains.sum(), 0.9)


if __name__ == "__main__":
  absltest.main()
