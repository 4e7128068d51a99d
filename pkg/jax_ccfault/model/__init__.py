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

"""Module for the boosted-tree classifier, oversampling and ensembles."""
from jax_ccfault.model.gbdt import BoostedTreeModel
from jax_ccfault.model.gbdt import GBDTParams
from jax_ccfault.model.gbdt import fit_gbdt
from jax_ccfault.model.gbdt import logistic_grad_hess
from jax_ccfault.model.oversample import OversampleConfig
from jax_ccfault.model.oversample import smote_svm
from jax_ccfault.model.ensemble import EnsembleModel
from jax_ccfault.model.ensemble import train_ensemble
from jax_ccfault.model.ensemble import predict
from jax_ccfault.model.ensemble import feature_importance
from jax_ccfault.model.ensemble import importance_by_group
