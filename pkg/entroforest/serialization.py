"""Versioned JSON model files for trained forests.

Floats are written with Python's shortest round-trip representation, so a
reloaded forest reproduces every prediction and log-density bit for bit.
Each tree is a flat pre-order list of nodes; internal nodes name their
children by position, which keeps arbitrarily deep trees readable.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from .data import Standardizer, Task
from .errors import EntroForestError, FormatError, VersionError
from .forest import Forest, InternalNode, SplitCandidate, TrainConfig, TreeNode
from .leaves import ClassLeaf, KdeLeaf

FORMAT_VERSION = 1


def _tree_to_list(tree: TreeNode) -> List[Dict[str, Any]]:
    nodes: List[Dict[str, Any]] = []
    # (node, position of the parent entry, "left"/"right" slot to fill)
    stack = [(tree, -1, "")]
    while stack:
        node, parent, slot = stack.pop()
        position = len(nodes)
        if parent >= 0:
            nodes[parent][slot] = position
        if isinstance(node, InternalNode):
            nodes.append(
                {
                    "feature": int(node.split.feature),
                    "threshold": float(node.split.threshold),
                    "left": None,
                    "right": None,
                }
            )
            stack.append((node.right, position, "right"))
            stack.append((node.left, position, "left"))
        elif isinstance(node, ClassLeaf):
            nodes.append({"class_leaf": node.to_dict()})
        else:
            nodes.append({"kde_leaf": node.to_dict()})
    return nodes


def to_dict(forest: Forest) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "task": forest.task.value,
        "n_outputs": int(forest.n_outputs),
        "n_features": int(forest.n_features),
        "label_names": list(forest.label_names),
        "standardizer": None if forest.standardizer is None else forest.standardizer.to_dict(),
        "config": forest.config.to_dict(),
        "trees": [_tree_to_list(tree) for tree in forest.trees],
    }


def serialize(forest: Forest) -> bytes:
    try:
        text = json.dumps(to_dict(forest), separators=(",", ":"), allow_nan=False)
    except ValueError as exc:
        raise FormatError(f"model contains a non-finite number: {exc}") from exc
    return text.encode("utf-8")


def _field(doc: Any, key: str, where: str) -> Any:
    if not isinstance(doc, dict):
        raise FormatError("expected an object", where or "<root>")
    if key not in doc:
        raise FormatError(f"missing field {key!r}", where or "<root>")
    return doc[key]


def _leaf_from_dict(doc: Dict[str, Any], where: str) -> TreeNode:
    if "class_leaf" in doc:
        leaf = doc["class_leaf"]
        return ClassLeaf(
            label=int(_field(leaf, "label", where)),
            n_samples=int(leaf.get("n_samples", 0)),
        )
    leaf = doc["kde_leaf"]
    return KdeLeaf(
        targets=np.asarray(_field(leaf, "targets", where), dtype=float),
        mean=np.asarray(_field(leaf, "mean", where), dtype=float),
        bandwidth_sqrt=np.asarray(_field(leaf, "bandwidth_sqrt", where), dtype=float),
        log_det_bandwidth=float(_field(leaf, "log_det_bandwidth", where)),
        degenerate=bool(leaf.get("degenerate", False)),
    )


def _child(doc: Dict[str, Any], slot: str, position: int, size: int, where: str) -> int:
    child = _field(doc, slot, where)
    if isinstance(child, bool) or not isinstance(child, int) or not position < child < size:
        raise FormatError(f"{slot} child {child!r} must be a later node position", where)
    return child


def _tree_from_list(doc: Any, where: str) -> TreeNode:
    if not isinstance(doc, list) or not doc:
        raise FormatError("expected a non-empty list of nodes", where)
    size = len(doc)
    built: List[Any] = [None] * size
    referenced = [False] * size
    # children sit after their parent, so a reverse sweep sees them first
    for position in range(size - 1, -1, -1):
        node_where = f"{where}[{position}]"
        node = doc[position]
        if not isinstance(node, dict):
            raise FormatError("expected an object", node_where)
        if "class_leaf" in node or "kde_leaf" in node:
            built[position] = _leaf_from_dict(node, node_where)
            continue
        split = SplitCandidate(
            feature=int(_field(node, "feature", node_where)),
            threshold=float(_field(node, "threshold", node_where)),
        )
        children = []
        for slot in ("left", "right"):
            child = _child(node, slot, position, size, node_where)
            if referenced[child]:
                raise FormatError(f"node {child} has more than one parent", node_where)
            referenced[child] = True
            children.append(built[child])
        built[position] = InternalNode(split, children[0], children[1])
    if not all(referenced[1:]):
        orphan = referenced.index(False, 1)
        raise FormatError(f"node {orphan} is not reachable from the root", where)
    return built[0]


def from_dict(doc: Any) -> Forest:
    version = _field(doc, "format_version", "")
    try:
        version_number = int(version)
    except (TypeError, ValueError):
        raise FormatError(f"unreadable format_version {version!r}", "format_version") from None
    if version_number != FORMAT_VERSION:
        raise VersionError(
            f"model format version {version_number} is not supported (reader is {FORMAT_VERSION})",
            "format_version",
        )
    try:
        trees_doc = _field(doc, "trees", "")
        if not isinstance(trees_doc, list) or not trees_doc:
            raise FormatError("expected a non-empty list of trees", "trees")
        trees = tuple(
            _tree_from_list(tree, f"trees[{i}]") for i, tree in enumerate(trees_doc)
        )
        standardizer_doc = _field(doc, "standardizer", "")
        return Forest(
            trees=trees,
            task=Task(_field(doc, "task", "")),
            n_outputs=int(_field(doc, "n_outputs", "")),
            n_features=int(_field(doc, "n_features", "")),
            config=TrainConfig.from_dict(_field(doc, "config", "")),
            standardizer=None
            if standardizer_doc is None
            else Standardizer.from_dict(standardizer_doc),
            label_names=tuple(str(name) for name in doc.get("label_names", [])),
        )
    except FormatError:
        raise
    except (EntroForestError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model document: {exc}") from exc


def deserialize(data: Union[bytes, str]) -> Forest:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"model file is not UTF-8: {exc}") from exc
    if not data.strip():
        raise FormatError("empty model document")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return from_dict(doc)


def save(forest: Forest, path: Union[str, Path]) -> None:
    Path(path).write_bytes(serialize(forest))


def load(path: Union[str, Path]) -> Forest:
    return deserialize(Path(path).read_bytes())
