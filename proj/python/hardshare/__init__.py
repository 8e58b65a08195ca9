# Copyright 2026 The hardshare Authors
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

"""Python bindings for the hardshare C++ core."""

import json

import numpy as np

from . import _core
from ._core import ConfigError, DataError, Model, NumericError, ParseError

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "ParseError",
    "discretized_mutual_information",
    "metric_report",
    "minisprites",
    "mutual_information",
    "read_dtb",
    "reproduce",
    "task_targets",
]


def minisprites(seed=1, **profile):
    """Render the MiniSprites grid. Keyword arguments override profile fields."""
    data = _core.minisprites(json.dumps(profile), seed)
    data["space"] = json.loads(data["space"])
    return data


def task_targets(factor_values, n_tasks=10, seed=7):
    """Outputs of a seeded bank of random tanh networks, one column per task."""
    return _core.task_targets(np.asarray(factor_values, dtype=np.float32), n_tasks, seed)


def metric_report(codes, factor_values, factor_indices, kinds, config=None, seed=0):
    """MIG, FactorVAE score, SAP and DCI for one representation."""
    cfg = json.loads(_core.default_metric_config())
    cfg.update(config or {})
    out = _core.metric_report(
        np.asarray(codes, dtype=np.float64),
        np.asarray(factor_values, dtype=np.float64),
        np.asarray(factor_indices, dtype=np.int32),
        list(kinds),
        json.dumps(cfg),
        seed,
    )
    return json.loads(out)


def mutual_information(a, b):
    return _core.mutual_information(np.asarray(a, dtype=np.int32), np.asarray(b, dtype=np.int32))


def discretized_mutual_information(a, b, bins=20):
    return _core.discretized_mutual_information(
        np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.int32), bins
    )


def read_dtb(path):
    """Returns (manifest, {entry name: array}) for a container file."""
    manifest, arrays = _core.read_dtb(str(path))
    return json.loads(manifest), arrays


def reproduce(manifest_path, out, threads=1):
    """Runs every pipeline stage and returns the parsed claims."""
    _core.reproduce(str(manifest_path), str(out), threads)
    with open(f"{out}/report/claims.json", encoding="utf-8") as f:
        return json.load(f)
