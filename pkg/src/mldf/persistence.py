"""Versioned on-disk format for fitted cascades.

A model file is a zip archive holding ``header.json`` and a handful of
``.npy`` arrays. The header describes the measure, thresholds, final
layer index, configuration and the layer/forest/fold layout. Trees are
stored in node-list form, concatenated in layer -> forest -> fold -> tree
order:

    tree_offsets  int64 (n_trees + 1)   node range of each tree
    feature       int64 (n_nodes)       split feature, -1 at leaves
    threshold     float64 (n_nodes)
    left, right   int64 (n_nodes)       child node ids local to the tree
    value         float64 (n_nodes, l)  label fractions
    n_samples     int64 (n_nodes)
    folds         int64                 fold ids of every folded forest, concatenated

Archive entries carry a fixed timestamp so equal models give equal bytes.
"""
from __future__ import annotations

import io
import json
import os
import tempfile
import zipfile

import numpy as np

from .cascade import CascadeConfig, CascadeModel, Layer, LayerConfig
from .errors import VersionError
from .forest import Forest, FoldedForest, ForestParams
from .trees import Tree, TreeParams

FORMAT_NAME = "mldf-cascade"
FORMAT_VERSION = 1

_EPOCH = (1980, 1, 1, 0, 0, 0)
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "n_samples")


def _tree_params_dict(p: TreeParams) -> dict:
    return {"criterion": int(p.criterion), "mode": int(p.mode), "max_depth": p.max_depth,
            "min_samples_leaf": p.min_samples_leaf,
            "feature_candidates": p.feature_candidates}


def _npy_bytes(a: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(a), allow_pickle=False)
    return buf.getvalue()


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(model: CascadeModel) -> bytes:
    trees = []
    folds = []
    layers = []
    for layer in model.layers:
        forests = []
        for kind, ff in zip(layer.config.forests, layer.forests):
            params = ff.forests[0].params
            forests.append({
                "kind": kind,
                "tree_params": _tree_params_dict(params.tree),
                "n_trees": params.n_trees,
                "bootstrap": params.bootstrap,
                "k": ff.k,
                "n_rows": int(len(ff.folds)),
                "trees_per_fold": [len(f.trees) for f in ff.forests],
            })
            folds.append(ff.folds)
            for forest in ff.forests:
                trees.extend(forest.trees)
        layers.append({
            "index": layer.index,
            "n_trees": layer.config.n_trees,
            "max_depth": layer.config.max_depth,
            "min_samples_leaf": layer.config.min_samples_leaf,
            "n_inputs": layer.n_inputs,
            "forests": forests,
        })

    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "measure": model.measure.value,
        "final_layer": model.final_layer,
        "thresholds": [float(t) for t in model.thresholds],
        "binarization_threshold": model.binarization_threshold,
        "n_features": model.n_features,
        "n_labels": model.n_labels,
        "label_names": list(model.label_names),
        "config": model.config.to_dict(),
        "history": [{k: v for k, v in rec.items() if k != "seconds"} for rec in model.history],
        "layers": layers,
    }

    sizes = [t.n_nodes for t in trees]
    arrays = {"tree_offsets": np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)}
    l = model.n_labels
    for name in _TREE_FIELDS:
        parts = [getattr(t, name) for t in trees]
        if parts:
            arrays[name] = np.concatenate(parts)
        else:
            arrays[name] = np.zeros((0, l) if name == "value" else 0)
    arrays["folds"] = np.concatenate(folds) if folds else np.zeros(0, np.int64)

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        entries = [("header.json", json.dumps(header, sort_keys=True, indent=1).encode("utf-8"))]
        entries += [(f"{name}.npy", _npy_bytes(arrays[name])) for name in sorted(arrays)]
        for name, data in entries:
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)
    return buf.getvalue()


def save_model(model: CascadeModel, path) -> None:
    atomic_write_bytes(path, dumps(model))


def loads(data: bytes) -> CascadeModel:
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile:
        raise VersionError("not a model file (bad archive)") from None
    with zf:
        try:
            header = json.loads(zf.read("header.json"))
        except KeyError:
            raise VersionError("not a model file (missing header)") from None
        if header.get("format") != FORMAT_NAME:
            raise VersionError(f"unknown model format {header.get('format')!r}")
        if header.get("version") != FORMAT_VERSION:
            raise VersionError(f"unsupported model version {header.get('version')!r}; "
                               f"this build reads version {FORMAT_VERSION}")
        arrays = {}
        for name in _TREE_FIELDS + ("tree_offsets", "folds"):
            with zf.open(f"{name}.npy") as fh:
                arrays[name] = np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)

    offsets = arrays["tree_offsets"]
    n_labels = header["n_labels"]
    value = arrays["value"].reshape(-1, n_labels)
    tree_i = 0
    fold_pos = 0

    def next_tree():
        nonlocal tree_i
        a, b = offsets[tree_i], offsets[tree_i + 1]
        tree_i += 1
        return Tree(arrays["feature"][a:b].copy(), arrays["threshold"][a:b].copy(),
                    arrays["left"][a:b].copy(), arrays["right"][a:b].copy(),
                    value[a:b].copy(), arrays["n_samples"][a:b].copy())

    config = CascadeConfig.from_dict(header["config"])
    layers = []
    for spec in header["layers"]:
        lc = LayerConfig(spec["index"], tuple(f["kind"] for f in spec["forests"]),
                         spec["n_trees"], spec["max_depth"], spec["min_samples_leaf"])
        folded = []
        for fspec in spec["forests"]:
            params = ForestParams(TreeParams(**fspec["tree_params"]), fspec["n_trees"],
                                  fspec["bootstrap"])
            forests = [Forest([next_tree() for _ in range(n)], params, spec["n_inputs"], n_labels)
                       for n in fspec["trees_per_fold"]]
            folds = arrays["folds"][fold_pos:fold_pos + fspec["n_rows"]].copy()
            fold_pos += fspec["n_rows"]
            folded.append(FoldedForest(forests, folds))
        layers.append(Layer(lc, folded, spec["n_inputs"]))

    return CascadeModel(config, layers, list(header["thresholds"]), header["n_features"],
                        n_labels, list(header["history"]), tuple(header["label_names"]))


def load_model(path) -> CascadeModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
