"""Save and load fitted forests and interval models as versioned ``.npz`` archives.

Each archive holds the node arrays and in-bag counts of every forest plus a
JSON header (``schema_version``, model kind, configs and scalar state).
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .forest import Forest, ForestConfig
from .pipeline import PibfModel, RfpiModel

SCHEMA_VERSION = 1
_FOREST_ARRAYS = ("feature", "threshold", "left", "right", "value", "n_nodes", "inbag", "leaf_of", "member",
                  "leaf_start")
_PIBF_ARRAYS = ("response", "rows2", "oob_pred1", "oob_resid_raw", "oob_pred2", "oob_resid_corrected")


def _forest_arrays(f: Forest, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": getattr(f, k) for k in _FOREST_ARRAYS}


def _forest_header(f: Forest) -> dict:
    return {"config": asdict(f.config), "n_features": f.n_features}


def _load_forest(arrs, head: dict, prefix: str) -> Forest:
    cfg = ForestConfig(**head["config"])
    return Forest(cfg, int(head["n_features"]), **{k: arrs[f"{prefix}.{k}"] for k in _FOREST_ARRAYS})


def save(obj: Forest | PibfModel | RfpiModel, path) -> None:
    if isinstance(obj, Forest):
        head = {"kind": "forest", "forests": {"f": _forest_header(obj)}}
        arrs = _forest_arrays(obj, "f")
    elif isinstance(obj, PibfModel):
        head = {"kind": "pibf",
                "forests": {"f1": _forest_header(obj.forest1), "f2": _forest_header(obj.forest2)},
                "alpha_target": obj.alpha_target, "alpha_working": obj.alpha_working,
                "coverage_range": list(obj.coverage_range), "calibration": obj.calibration}
        arrs = {**_forest_arrays(obj.forest1, "f1"), **_forest_arrays(obj.forest2, "f2"),
                **{k: getattr(obj, k) for k in _PIBF_ARRAYS}}
    elif isinstance(obj, RfpiModel):
        head = {"kind": "rfpi", "forests": {"f": _forest_header(obj.forest)},
                "pi_methods": list(obj.pi_methods), "alpha_target": obj.alpha_target,
                "alpha_working": obj.alpha_working, "coverage_range": list(obj.coverage_range),
                "calibrated": obj.calibrated}
        arrs = {**_forest_arrays(obj.forest, "f"), "response": obj.response}
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    head["schema_version"] = SCHEMA_VERSION
    with open(Path(path), "wb") as fh:
        np.savez_compressed(fh, header=np.array(json.dumps(head, sort_keys=True)), **arrs)


def load(path) -> Forest | PibfModel | RfpiModel:
    with np.load(Path(path), allow_pickle=False) as z:
        head = json.loads(str(z["header"]))
        version = head.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
        arrs = {k: z[k] for k in z.files if k != "header"}
    forests = head["forests"]
    kind = head["kind"]
    if kind == "forest":
        return _load_forest(arrs, forests["f"], "f")
    if kind == "pibf":
        return PibfModel(_load_forest(arrs, forests["f1"], "f1"), _load_forest(arrs, forests["f2"], "f2"),
                         **{k: arrs[k] for k in _PIBF_ARRAYS}, alpha_target=head["alpha_target"],
                         alpha_working=head["alpha_working"], coverage_range=tuple(head["coverage_range"]),
                         calibration=head["calibration"])
    if kind == "rfpi":
        return RfpiModel(_load_forest(arrs, forests["f"], "f"), arrs["response"], tuple(head["pi_methods"]),
                         head["alpha_target"], dict(head["alpha_working"]), tuple(head["coverage_range"]),
                         head["calibrated"])
    raise ValueError(f"unknown model kind {kind!r}")
