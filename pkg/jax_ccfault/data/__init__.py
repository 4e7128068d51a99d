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

"""Module for signal containers, dataset import and synthetic data."""
from jax_ccfault.data.sigb import SigbWriter
from jax_ccfault.data.sigb import iter_sigb
from jax_ccfault.data.sigb import read_sigb
from jax_ccfault.data.sigb import write_sigb
from jax_ccfault.data.columnar import import_columnar
from jax_ccfault.data.synth import SynthScenario
from jax_ccfault.data.synth import write_synth
