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

"""Library for covered-conductor fault detection from partial discharge."""
import jax

# Every kernel of the pipeline works in float64.
jax.config.update("jax_enable_x64", True)

from jax_ccfault import errors
from jax_ccfault.core import PipelineConfig
from jax_ccfault.core import SignalFrame
from jax_ccfault.core import FlatSignal
from jax_ccfault.core import Pulse
from jax_ccfault.core import Waveform
from jax_ccfault.core import FrameAnalysis
from jax_ccfault.core import load_config
from jax_ccfault.core import save_config
from jax_ccfault.preprocess import phase_correct
from jax_ccfault.preprocess import savgol_kernel
from jax_ccfault.preprocess import flatten
from jax_ccfault.preprocess import preprocess_frame
from jax_ccfault.preprocess import clear_caches
from jax_ccfault.noise import estimate_noise_level
from jax_ccfault.noise import noise_level
from jax_ccfault.pulses import detect_pulses
from jax_ccfault.clustering import ClusterModel
from jax_ccfault.clustering import extract_waveform
from jax_ccfault.clustering import kmeans_pp
from jax_ccfault.clustering import assign
from jax_ccfault.clustering import sse_curve
from jax_ccfault.features import ClusterBundle
from jax_ccfault.features import TemplateBank
from jax_ccfault.features import FeatureVector
from jax_ccfault.features import build_features
from jax_ccfault.features import feature_manifest
from jax_ccfault.features import feature_groups
from jax_ccfault.features import segment_counts
from jax_ccfault.metrics import ConfusionCounts
from jax_ccfault.metrics import mcc
from jax_ccfault.metrics import precision_recall
from jax_ccfault.metrics import threshold_sweep
from jax_ccfault.pipeline import analyze_frame
from jax_ccfault.pipeline import featurize_frame
from jax_ccfault.pipeline import featurize
from jax_ccfault.pipeline import fit_clusters
from jax_ccfault import model
from jax_ccfault import data
