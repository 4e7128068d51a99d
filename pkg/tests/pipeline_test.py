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
import numpy as np

from jax_ccfault import core
from jax_ccfault import features
from jax_ccfault import pipeline
from jax_ccfault.data import synth
from jax_ccfault.model import ensemble

LENGTH = 40000
SCENARIO = synth.SynthScenario(
    seed=11, n_frames=12, faulty_fraction=0.5, length=LENGTH,
    pd_count_min=30, pd_count_max=50, interference_count_min=10,
    interference_count_max=20)
# Noise sections overlap 25-fold on 40000-sample frames, so every pulse fills
# about 25 of them; per-bin counts keep the pulses out of the background.
CFG = core.PipelineConfig(k_phase=3, k_all=6, n_templates=3, n_sample=30,
                          noise_scan="bin",
                          ensemble_seeds=1, folds=3, gbdt_num_trees=20,
                          gbdt_learning_rate=0.3, gbdt_min_data_in_leaf=1,
                          early_stopping_rounds=0, threads=1)


class HelpersTest(absltest.TestCase):

  def test_ordered_map_keeps_order(self):
    fn = lambda i: i * i
    self.assertEqual(pipeline.ordered_map(fn, range(50), threads=4),
                     [i * i for i in range(50)])
    self.assertEqual(pipeline.ordered_map(fn, [3, 1], threads=1), [9, 1])

  def test_chunks(self):
    self.assertEqual(list(pipeline.chunks(range(7), 3)),
                     [[0, 1, 2], [3, 4, 5], [6]])
    self.assertEqual(list(pipeline.chunks([], 3)), [])

  def test_feature_table(self):
    names = ("a", "b")
    vectors = [features.FeatureVector("x", names, np.array([1.0, 2.0])),
               features.FeatureVector("y", names, np.array([3.0, 4.0]))]
    df = pipeline.feature_table(vectors, [True, None])
    self.assertEqual(list(df.columns), ["frame_id", "a", "b", "faulty"])
    self.assertEqual(df["faulty"].tolist(), [1, -1])
    ids, cols, x, y = pipeline.table_arrays(df)
    self.assertEqual((ids, cols), (["x", "y"], ["a", "b"]))
    np.testing.assert_array_equal(x, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(y, [1, -1])
    unlabelled = pipeline.feature_table(vectors, [None, None])
    self.assertNotIn("faulty", unlabelled.columns)
    self.assertIsNone(pipeline.table_arrays(unlabelled)[3])


class EndToEndTest(absltest.TestCase):

  @classmethod
  def setUpClass(cls):
    super().setUpClass()
    cls.frames = [f for f, _ in synth.generate(SCENARIO)]
    cls.analyses = pipeline.analyze(cls.frames, CFG, length=LENGTH)

  def test_analyses(self):
    self.assertLen(self.analyses, 12)
    for frame, analysis in zip(self.frames, self.analyses):
      self.assertEqual(analysis.frame_id, frame.id)
      self.assertEqual(analysis.faulty, frame.faulty)
      self.assertGreater(analysis.n_pulses, 0)

  def test_stream_matches_list(self):
    path = os.path.join(self.create_tempdir().full_path, "d.sigb")
    synth.write_synth(SCENARIO, path, path + ".jsonl")
    stream = pipeline.AnalysisStream(path, CFG, length=LENGTH)
    self.assertLen(stream, 12)
    self.assertEqual(stream.labels(), [f.faulty for f in self.frames])
    streamed = list(stream)
    self.assertEqual(stream.passes, 1)
    for a, b in zip(streamed, self.analyses):
      self.assertEqual(a.pulses, b.pulses)
    bundle = pipeline.fit_clusters(stream, CFG, labels=stream.labels())
    self.assertEqual(stream.passes, 4)
    self.assertEqual(bundle.templates.provenance, "selected")

  def test_train_and_predict(self):
    bundle = pipeline.fit_clusters(self.analyses, CFG)
    self.assertLen(bundle.templates.clusters, 3)
    self.assertEqual(bundle.templates.templates.shape, (3, 50))
    vectors = pipeline.featurize(self.frames, bundle, CFG, length=LENGTH)
    df = pipeline.feature_table(vectors, [f.faulty for f in self.frames])
    self.assertLen(df.columns, 2 + len(bundle.manifest))

    faulty = df["faulty"] == 1
    self.assertGreater(df.loc[faulty, "count_q13"].mean(),
                       df.loc[~faulty, "count_q13"].mean())

    ids, names, x, y = pipeline.table_arrays(df)
    model = ensemble.train_ensemble(x, y, names, CFG)
    self.assertLen(model.models, 3)
    p, decision = ensemble.predict(model, names, x)
    self.assertEqual(p.shape, (12,))
    self.assertTrue(np.all((p > 0) & (p < 1)))
    self.assertEqual(decision.dtype, bool)

  def test_configured_templates(self):
    cfg = CFG.replace(template_clusters=(0, 1, 2))
    bundle = pipeline.fit_clusters(self.analyses, cfg)
    self.assertEqual(bundle.templates.clusters, (0, 1, 2))
    self.assertEqual(bundle.templates.provenance, "configured")


if __name__ == "__main__":
  absltest.main()
