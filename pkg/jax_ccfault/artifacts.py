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

"""Module for the versioned binary container of trained artifacts.

Layout (little-endian):

  b"CCFA" | u16 version | u32 header length | JSON header | array bytes

The header is sorted-key JSON with a free-form `meta` object and an `arrays`
list of {name, dtype, shape, offset, nbytes}; offsets are relative to the
first byte after the header. Identical inputs produce identical bytes.
"""
import json
import math
import struct

from typing import Any, Dict, Tuple

import numpy as np

from jax_ccfault import clustering
from jax_ccfault import errors
from jax_ccfault import features
from jax_ccfault.model import ensemble as ensemble_lib
from jax_ccfault.model import gbdt

MAGIC = b"CCFA"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")

Arrays = Dict[str, np.ndarray]


def _json_safe(value: Any) -> Any:
  if isinstance(value, float) and not math.isfinite(value):
    return None
  if isinstance(value, dict):
    return {k: _json_safe(v) for k, v in value.items()}
  if isinstance(value, (list, tuple)):
    return [_json_safe(v) for v in value]
  return value


def _dumps(obj: Any) -> str:
  return json.dumps(_json_safe(obj), sort_keys=True, separators=(",", ":"),
                    allow_nan=False)


def pack(meta: Dict[str, Any], arrays: Arrays) -> bytes:
  entries, chunks, offset = [], [], 0
  for name in sorted(arrays):
    a = np.asarray(arrays[name])
    a = a.astype(a.dtype.newbyteorder("<"), copy=False)
    raw = np.ascontiguousarray(a).tobytes()
    entries.append({"name": name, "dtype": a.dtype.str,
                    "shape": list(a.shape), "offset": offset,
                    "nbytes": len(raw)})
    chunks.append(raw)
    offset += len(raw)
  header = _dumps({"meta": meta, "arrays": entries}).encode("utf-8")
  return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)


def unpack(data: bytes) -> Tuple[Dict[str, Any], Arrays]:
  if len(data) < 4 or data[:4] != MAGIC:
    raise errors.BadMagic(f"not an artifact container: magic {data[:4]!r}",
                          magic=data[:4].hex())
  if len(data) < _PREFIX.size:
    raise errors.Truncated("artifact prefix cut short", size=len(data))
  _, version, header_len = _PREFIX.unpack_from(data)
  if version != VERSION:
    raise errors.BadVersion(f"artifact version {version}, expected {VERSION}",
                            version=version, expected=VERSION)
  body = _PREFIX.size + header_len
  if len(data) < body:
    raise errors.Truncated("artifact header cut short", size=len(data),
                           needed=body)
  header = json.loads(data[_PREFIX.size:body].decode("utf-8"))
  arrays = {}
  for entry in header["arrays"]:
    start = body + entry["offset"]
    end = start + entry["nbytes"]
    if len(data) < end:
      raise errors.Truncated(f"array {entry['name']} cut short",
                             array=entry["name"], size=len(data), needed=end)
    arrays[entry["name"]] = np.frombuffer(
        data[start:end], dtype=np.dtype(entry["dtype"])).reshape(
            entry["shape"]).copy()
  return header["meta"], arrays


def save(path: str, meta: Dict[str, Any], arrays: Arrays) -> None:
  with open(path, "wb") as f:
    f.write(pack(meta, arrays))


def load(path: str) -> Tuple[Dict[str, Any], Arrays]:
  with open(path, "rb") as f:
    return unpack(f.read())


def _expect_kind(meta: Dict[str, Any], kind: str) -> None:
  if meta.get("kind") != kind:
    raise errors.BadMagic(f"artifact holds {meta.get('kind')!r}, not {kind!r}",
                          kind=meta.get("kind"), expected=kind)


# Cluster bundles.


def bundle_to_container(bundle: features.ClusterBundle
                        ) -> Tuple[Dict[str, Any], Arrays]:
  arrays: Arrays = {"templates": bundle.templates.templates}
  scopes = {}
  for scope, model in bundle.models.items():
    arrays[f"{scope}/centroids"] = model.centroids
    arrays[f"{scope}/sse_history"] = np.asarray(model.sse_history, np.float64)
    scopes[scope] = {"seed": model.seed, "sse": model.sse,
                     "n_iter": model.n_iter}
  meta = {"kind": "cluster_bundle", "scopes": scopes,
          "template_clusters": list(bundle.templates.clusters),
          "template_before": bundle.templates.before,
          "template_provenance": bundle.templates.provenance,
          "manifest": list(bundle.manifest)}
  return meta, arrays


def bundle_from_container(meta: Dict[str, Any],
                          arrays: Arrays) -> features.ClusterBundle:
  _expect_kind(meta, "cluster_bundle")
  models = {}
  for scope in clustering.SCOPES:
    info = meta["scopes"][scope]
    models[scope] = clustering.ClusterModel(
        arrays[f"{scope}/centroids"], scope, info["seed"], info["sse"],
        tuple(arrays[f"{scope}/sse_history"].tolist()), info["n_iter"])
  bank = features.TemplateBank(arrays["templates"],
                               tuple(meta["template_clusters"]),
                               meta["template_before"],
                               meta["template_provenance"])
  return features.ClusterBundle(models, bank)


def save_bundle(path: str, bundle: features.ClusterBundle) -> None:
  save(path, *bundle_to_container(bundle))


def load_bundle(path: str) -> features.ClusterBundle:
  return bundle_from_container(*load(path))


# Ensembles.

_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "gain")
_TREE_DTYPES = (np.int32, np.float64, np.int32, np.int32, np.float64,
                np.float64)


def _concat(parts, dtype) -> Tuple[np.ndarray, np.ndarray]:
  sizes = [len(p) for p in parts]
  offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
  flat = (np.concatenate(parts).astype(dtype) if parts
          else np.zeros((0,), dtype))
  return flat, offsets


def _split(flat: np.ndarray, offsets: np.ndarray):
  return [flat[offsets[i]:offsets[i + 1]] for i in range(len(offsets) - 1)]


def _model_arrays(prefix: str, model: gbdt.BoostedTreeModel) -> Arrays:
  out = {}
  for field, dtype in zip(_TREE_FIELDS, _TREE_DTYPES):
    flat, offsets = _concat([getattr(t, field) for t in model.trees], dtype)
    out[f"{prefix}/tree_{field}"] = flat
  out[f"{prefix}/tree_offsets"] = offsets
  edges, edge_offsets = _concat(list(model.bin_edges), np.float64)
  out[f"{prefix}/bin_edges"] = edges
  out[f"{prefix}/bin_edge_offsets"] = edge_offsets
  out[f"{prefix}/train_loss"] = np.asarray(model.train_loss, np.float64)
  out[f"{prefix}/valid_loss"] = np.asarray(model.valid_loss, np.float64)
  out[f"{prefix}/step_scale"] = np.asarray(model.step_scale, np.float64)
  return out


def _model_from_arrays(prefix: str, arrays: Arrays,
                       info: Dict[str, Any]) -> gbdt.BoostedTreeModel:
  offsets = arrays[f"{prefix}/tree_offsets"]
  columns = [_split(arrays[f"{prefix}/tree_{f}"], offsets)
             for f in _TREE_FIELDS]
  trees = tuple(gbdt.Tree(*parts) for parts in zip(*columns))
  edges = tuple(_split(arrays[f"{prefix}/bin_edges"],
                       arrays[f"{prefix}/bin_edge_offsets"]))
  return gbdt.BoostedTreeModel(
      info["base_score"], info["learning_rate"], info["n_features"], trees,
      edges, tuple(arrays[f"{prefix}/train_loss"].tolist()),
      tuple(arrays[f"{prefix}/valid_loss"].tolist()),
      tuple(arrays[f"{prefix}/step_scale"].tolist()))


def ensemble_to_container(model: ensemble_lib.EnsembleModel
                          ) -> Tuple[Dict[str, Any], Arrays]:
  arrays: Arrays = {}
  members = []
  for i, member in enumerate(model.models):
    arrays.update(_model_arrays(f"m{i:04d}", member))
    members.append({"base_score": member.base_score,
                    "learning_rate": member.learning_rate,
                    "n_features": member.n_features})
  meta = {"kind": "ensemble", "members": members,
          "threshold": model.threshold, "manifest": list(model.manifest),
          "variant": model.variant, "alpha": model.alpha,
          "feature_set": model.feature_set,
          "probability_mode": model.probability_mode,
          "report": [r._asdict() for r in model.report],
          "valid_mcc": model.valid_mcc}
  return meta, arrays


def _nan(value):
  return math.nan if value is None else value


def ensemble_from_container(meta: Dict[str, Any], arrays: Arrays
                            ) -> ensemble_lib.EnsembleModel:
  _expect_kind(meta, "ensemble")
  models = tuple(_model_from_arrays(f"m{i:04d}", arrays, info)
                 for i, info in enumerate(meta["members"]))
  report = tuple(
      ensemble_lib.MemberReport(**{k: _nan(v) for k, v in r.items()})
      for r in meta["report"])
  return ensemble_lib.EnsembleModel(
      models, meta["threshold"], tuple(meta["manifest"]), meta["variant"],
      meta["alpha"], meta["feature_set"], meta["probability_mode"], report,
      _nan(meta["valid_mcc"]))


def save_ensemble(path: str, model: ensemble_lib.EnsembleModel) -> None:
  save(path, *ensemble_to_container(model))


def load_ensemble(path: str) -> ensemble_lib.EnsembleModel:
  return ensemble_from_container(*load(path))


def ensemble_summary(model: ensemble_lib.EnsembleModel) -> Dict[str, Any]:
  """Human-readable digest stored next to the binary ensemble."""
  return _json_safe({
      "variant": model.variant, "alpha": model.alpha,
      "threshold": model.threshold, "members": len(model.models),
      "trees": sum(len(m.trees) for m in model.models),
      "features": len(model.manifest), "feature_set": model.feature_set,
      "probability_mode": model.probability_mode,
      "pooled_valid_mcc": model.valid_mcc})


def write_summary(path: str, summary: Dict[str, Any]) -> None:
  with open(path, "w") as f:
    f.write(json.dumps(_json_safe(summary), sort_keys=True, indent=2,
                       allow_nan=False) + "\n")
