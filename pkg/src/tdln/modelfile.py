"""Model file: a JSON payload followed by a SHA-256 trailer line.

Layout (UTF-8, LF)::

    <payload: one line of compact JSON>
    sha256 <hex digest of the payload bytes>

Payload keys, in this order: ``format``, ``format_version``, ``mode``,
``class_count``, ``channels``, ``window`` {width, stride}, ``config`` (all
resolved hyperparameters), ``norm`` {mean, std, epsilon}, ``deep`` (absent in
ml_only mode), ``forest`` (absent in dl_only mode), ``metadata``.

Arrays are ``{"shape": [...], "data": "<space separated %.17g values>"}``;
17 significant digits round-trip every float64 exactly. ``deep`` holds
``dropout`` plus ``arrays``: the network arrays in the fixed order blstm
forward (W_f, W_i, W_S, W_o, b_f, b_i, b_S, b_o), blstm reverse (same), lstm
(same), then each dense layer (W, b), and ``activations`` for the dense layers.
``forest`` holds the forest settings, per-tree ``subset`` and nested ``root``
nodes: ``{"counts": [...]}`` for a leaf, and additionally ``feature``,
``threshold`` (%.17g string), ``left``, ``right`` for a split.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .dense import DenseParams
from .extratrees import ForestModel, Tree
from .network import DeepNetParams
from .pipeline import TdlnModel
from .preprocess import NormStats, WindowSpec
from .recurrent import BlstmParams, LstmParams

FORMAT_NAME = "tdln-model"
FORMAT_VERSION = 1


class ModelFileError(Exception):
    """Base class for model file problems."""


class MalformedModelFile(ModelFileError):
    pass


class ModelVersionError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


def _enc(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": " ".join("%.17g" % v for v in a.ravel())}


def _dec(obj) -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    text = obj["data"]
    values = np.array([float(v) for v in text.split()], dtype=np.float64) if text else np.zeros(0)
    if values.size != int(np.prod(shape)):
        raise MalformedModelFile(f"array data has {values.size} values, shape {shape} needs {int(np.prod(shape))}")
    return values.reshape(shape)


def _tree_to_record(tree: Tree) -> dict:
    def node(k):
        rec = {"counts": [int(c) for c in tree.counts[k]]}
        if tree.feature[k] >= 0:
            rec["feature"] = int(tree.feature[k])
            rec["threshold"] = "%.17g" % tree.threshold[k]
            rec["left"] = node(int(tree.left[k]))
            rec["right"] = node(int(tree.right[k]))
        return rec

    return node(0)


def _tree_from_record(root: dict, n: int) -> Tree:
    feat, thr, left, right, counts = [], [], [], [], []

    def visit(rec):
        k = len(feat)
        c = [int(v) for v in rec["counts"]]
        if len(c) != n:
            raise MalformedModelFile(f"node histogram has {len(c)} classes, expected {n}")
        counts.append(c)
        feat.append(-1); thr.append(0.0); left.append(-1); right.append(-1)
        if "feature" in rec:
            feat[k] = int(rec["feature"])
            thr[k] = float(rec["threshold"])
            left[k] = visit(rec["left"])
            right[k] = visit(rec["right"])
        return k

    visit(root)
    return Tree(np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(counts, dtype=np.int64).reshape(-1, n))


def model_to_payload(model: TdlnModel) -> dict:
    payload = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "mode": model.mode,
        "class_count": model.class_count,
        "channels": model.channels,
        "window": {"width": model.window.width, "stride": model.window.stride},
        "config": model.config,
        "norm": {"mean": _enc(model.norm.mean), "std": _enc(model.norm.std), "epsilon": "%.17g" % model.norm.epsilon},
    }
    if model.deep is not None:
        payload["deep"] = {
            "dropout": "%.17g" % model.deep.dropout,
            "activations": [layer.activation for layer in model.deep.fcnn],
            "arrays": [_enc(a) for a in model.deep.arrays()],
        }
    if model.forest is not None:
        f = model.forest
        payload["forest"] = {
            "n_features": f.n_features, "class_count": f.class_count, "n_estimators": f.n_estimators,
            "max_depth": f.max_depth, "seed": f.seed, "bootstrap": f.bootstrap,
            "trees": [{"subset": [int(v) for v in s], "root": _tree_to_record(t)}
                      for t, s in zip(f.trees, f.feature_subsets)],
        }
    payload["metadata"] = model.metadata
    return payload


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(model: TdlnModel) -> bytes:
    body = json.dumps(model_to_payload(model), separators=(",", ":"), default=_json_default).encode("utf-8")
    return body + b"\nsha256 " + hashlib.sha256(body).hexdigest().encode("ascii") + b"\n"


def save_model(model: TdlnModel, path) -> None:
    Path(path).write_bytes(dumps(model))


def _deep_from_payload(d: dict, channels: int) -> DeepNetParams:
    arrays = [_dec(a) for a in d["arrays"]]
    acts = d["activations"]
    if len(arrays) != 24 + 2 * len(acts):
        raise MalformedModelFile(f"deep section has {len(arrays)} arrays, expected {24 + 2 * len(acts)}")
    bf = LstmParams(*arrays[0:8])
    br = LstmParams(*arrays[8:16])
    lstm = LstmParams(*arrays[16:24])
    fcnn = [DenseParams(arrays[24 + 2 * k], arrays[25 + 2 * k], act) for k, act in enumerate(acts)]
    deep = DeepNetParams(BlstmParams(bf, br), lstm, fcnn, float(d["dropout"]))
    if deep.input_channels != channels:
        raise MalformedModelFile(f"network expects {deep.input_channels} channels, file declares {channels}")
    return deep


def loads(data: bytes) -> TdlnModel:
    body, sep, trailer = data.rstrip(b"\n").rpartition(b"\n")
    if not sep or not trailer.startswith(b"sha256 "):
        raise MalformedModelFile("missing checksum trailer (file truncated or not a model file)")
    digest = trailer[len(b"sha256 "):].decode("ascii", "replace").strip()
    if len(digest) != 64:
        raise MalformedModelFile("checksum trailer is incomplete (file truncated)")
    if hashlib.sha256(body).hexdigest() != digest:
        raise ChecksumError("payload checksum does not match trailer")
    try:
        p = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedModelFile(f"payload is not valid JSON: {exc}") from None
    if not isinstance(p, dict) or p.get("format") != FORMAT_NAME:
        raise MalformedModelFile("not a tdln model file")
    version = p.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"model file format version {version}, this build reads version {FORMAT_VERSION}")
    try:
        n = int(p["class_count"])
        channels = int(p["channels"])
        window = WindowSpec(int(p["window"]["width"]), int(p["window"]["stride"]))
        norm = NormStats(_dec(p["norm"]["mean"]), _dec(p["norm"]["std"]), float(p["norm"]["epsilon"]))
        deep = _deep_from_payload(p["deep"], channels) if "deep" in p else None
        forest = None
        if "forest" in p:
            f = p["forest"]
            trees = [_tree_from_record(t["root"], n) for t in f["trees"]]
            subsets = [np.array(t["subset"], dtype=np.int64) for t in f["trees"]]
            forest = ForestModel(trees, subsets, int(f["n_features"]), int(f["class_count"]),
                                 int(f["n_estimators"]), f["max_depth"], int(f["seed"]), bool(f["bootstrap"]))
        return TdlnModel(norm, window, p["mode"], n, channels, deep, forest, p["config"], p["metadata"])
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise MalformedModelFile(f"bad model payload: {exc!r}") from None


def load_model(path) -> TdlnModel:
    return loads(Path(path).read_bytes())
