"""Rendered-page data model: snapshot documents, tokenizer, keyword counting.

A snapshot is a serialized rendered DOM tree with geometry and visibility,
captured by the session driver (or authored as a fixture). It is the sole
input of the login detector; no HTML parsing happens downstream of it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, Mapping, Optional

from .errors import InvariantError, SchemaError

__all__ = [
    "BBox",
    "ElementNode",
    "PageSnapshot",
    "KeywordLexicon",
    "load_snapshot",
    "snapshot_from_dict",
    "serialize_snapshot",
    "default_lexicon",
    "load_lexicon",
    "tokenize",
    "count_phrase",
    "keyword_frequencies",
]


@dataclass(frozen=True)
class BBox:
    """Element geometry in CSS pixels relative to the document origin."""

    top: float
    left: float
    width: float
    height: float


@dataclass(frozen=True)
class ElementNode:
    node_id: int
    tag: str
    attributes: tuple[tuple[str, str], ...]  # ordered (name, value) pairs
    inner_text: str
    bbox: BBox
    visible: bool
    interactive: bool
    children: tuple[int, ...]
    dom_order: int

    def attr(self, name: str, default: Optional[str] = None) -> Optional[str]:
        for key, value in self.attributes:
            if key == name:
                return value
        return default


@dataclass(frozen=True)
class PageSnapshot:
    url: str
    viewport_width: int
    viewport_height: int
    root: int
    nodes: Mapping[int, ElementNode]
    captured_at: str  # RFC 3339
    # Nested snapshots for iframe elements, keyed by the iframe's node_id.
    # Capture depth is one level; anything deeper is dropped at load time.
    frames: Mapping[int, "PageSnapshot"] = field(default_factory=dict)

    def node(self, node_id: int) -> ElementNode:
        return self.nodes[node_id]

    def in_dom_order(self) -> list[ElementNode]:
        return sorted(self.nodes.values(), key=lambda n: n.dom_order)

    def total_node_count(self) -> int:
        return len(self.nodes) + sum(f.total_node_count() for f in self.frames.values())


@dataclass(frozen=True)
class KeywordLexicon:
    """Positive keywords mapped to the candidate classes they signal, plus
    deprecation keywords that veto an element outright."""

    positive: Mapping[str, frozenset[str]]
    deprecation: frozenset[str]

    def __post_init__(self) -> None:
        overlap = set(self.positive) & set(self.deprecation)
        if overlap:
            raise InvariantError(f"keywords in both positive and deprecation sets: {sorted(overlap)}")
        for required in ("login", "account", "email"):
            if required not in self.positive:
                raise InvariantError(f"lexicon is missing required positive keyword {required!r}")
        for required in ("user guide", "policy"):
            if required not in self.deprecation:
                raise InvariantError(f"lexicon is missing required deprecation keyword {required!r}")

    def all_keywords(self) -> Iterator[str]:
        yield from self.positive
        yield from self.deprecation


def tokenize(s: str) -> list[str]:
    """Split a string into lowercase tokens at non-word characters and at
    lowercase-to-uppercase camel boundaries.

    Word characters are alphanumerics (`str.isalnum`); camel boundaries are
    only recognized between ASCII letters, so non-ASCII words never split.
    """
    tokens: list[str] = []
    current: list[str] = []
    prev = ""
    for ch in s:
        if ch.isalnum():
            if (
                current
                and prev.isascii()
                and ch.isascii()
                and prev.islower()
                and ch.isupper()
                and prev.isalpha()
                and ch.isalpha()
            ):
                tokens.append("".join(current).lower())
                current = []
            current.append(ch)
            prev = ch
        else:
            if current:
                tokens.append("".join(current).lower())
                current = []
            prev = ""
    if current:
        tokens.append("".join(current).lower())
    return tokens


def count_phrase(stream: list[str], phrase: tuple[str, ...]) -> int:
    """Occurrences of a token n-gram in a token stream (sliding window)."""
    n = len(phrase)
    if n == 0 or n > len(stream):
        return 0
    if n == 1:
        return stream.count(phrase[0])
    return sum(1 for i in range(len(stream) - n + 1) if tuple(stream[i : i + n]) == phrase)


def _token_streams(element: ElementNode) -> list[list[str]]:
    streams = [tokenize(value) for _, value in element.attributes]
    streams.append(tokenize(element.inner_text))
    return streams


def keyword_frequencies(element: ElementNode, lexicon: KeywordLexicon) -> dict[str, int]:
    """Count every lexicon keyword (positive and deprecation) across the token
    streams of the element's attribute values and inner text.

    Multi-word keywords match consecutive tokens within one stream. Zero
    counts are omitted.
    """
    streams = _token_streams(element)
    freq: dict[str, int] = {}
    for keyword in lexicon.all_keywords():
        phrase = tuple(tokenize(keyword))
        count = sum(count_phrase(stream, phrase) for stream in streams)
        if count:
            freq[keyword] = count
    return freq


# --- snapshot document (de)serialization ---

_FRAME_CAPABLE_TAGS = frozenset({"iframe", "frame"})


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaError(message)


def _parse_node(obj: object) -> tuple[ElementNode, Optional[dict]]:
    _require(isinstance(obj, dict), "node entry must be an object")
    assert isinstance(obj, dict)
    for key in ("id", "tag", "attrs", "text", "bbox", "visible", "interactive", "children"):
        _require(key in obj, f"node entry missing key {key!r}")
    _require(isinstance(obj["id"], int) and not isinstance(obj["id"], bool), "node id must be an integer")
    _require(isinstance(obj["tag"], str), "node tag must be a string")
    _require(isinstance(obj["attrs"], list), "node attrs must be a key/value array")
    attrs = []
    for pair in obj["attrs"]:
        _require(
            isinstance(pair, list) and len(pair) == 2 and all(isinstance(p, str) for p in pair),
            "each attrs entry must be a [name, value] string pair",
        )
        attrs.append((pair[0], pair[1]))
    _require(isinstance(obj["text"], str), "node text must be a string")
    bbox = obj["bbox"]
    _require(
        isinstance(bbox, list) and len(bbox) == 4 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox),
        "node bbox must be [top, left, width, height] numbers",
    )
    _require(isinstance(obj["visible"], bool), "node visible must be a boolean")
    _require(isinstance(obj["interactive"], bool), "node interactive must be a boolean")
    _require(
        isinstance(obj["children"], list)
        and all(isinstance(c, int) and not isinstance(c, bool) for c in obj["children"]),
        "node children must be an id array",
    )
    dom_order = obj.get("dom_order")
    _require(isinstance(dom_order, int) and not isinstance(dom_order, bool), "node dom_order must be an integer")
    node = ElementNode(
        node_id=obj["id"],
        tag=obj["tag"],
        attributes=tuple(attrs),
        inner_text=obj["text"],
        bbox=BBox(float(bbox[0]), float(bbox[1]), float(bbox[2]), float(bbox[3])),
        visible=obj["visible"],
        interactive=obj["interactive"],
        children=tuple(obj["children"]),
        dom_order=dom_order,
    )
    frame = obj.get("frame")
    if frame is not None:
        _require(isinstance(frame, dict), "node frame must be a snapshot object")
    return node, frame


def _check_invariants(snap: PageSnapshot) -> None:
    if snap.viewport_height <= 0:
        raise InvariantError("viewport height must be positive")
    if snap.root not in snap.nodes:
        raise InvariantError(f"root node {snap.root} not present in nodes")
    parents: dict[int, int] = {}
    for node in snap.nodes.values():
        if not node.tag or node.tag != node.tag.lower():
            raise InvariantError(f"node {node.node_id}: tag must be lowercase and non-empty")
        if node.visible and (node.bbox.width == 0 or node.bbox.height == 0):
            raise InvariantError(f"node {node.node_id}: visible element has zero area")
        for child in node.children:
            if child not in snap.nodes:
                raise InvariantError(f"node {node.node_id}: dangling child {child}")
            if child in parents:
                raise InvariantError(f"node {child} has multiple parents")
            parents[child] = node.node_id
    if snap.root in parents:
        raise InvariantError("root node has a parent")
    # Reachability + cycle check + dom_order consistency via pre-order walk.
    seen: set[int] = set()
    order: list[int] = []
    stack = [snap.root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise InvariantError(f"cycle detected at node {nid}")
        seen.add(nid)
        order.append(snap.nodes[nid].dom_order)
        stack.extend(reversed(snap.nodes[nid].children))
    if len(seen) != len(snap.nodes):
        orphans = sorted(set(snap.nodes) - seen)
        raise InvariantError(f"nodes unreachable from root: {orphans}")
    if any(b <= a for a, b in zip(order, order[1:])):
        raise InvariantError("dom_order is not consistent with pre-order traversal")


def _collect_ids(snap: PageSnapshot, into: set[int]) -> None:
    for nid in snap.nodes:
        if nid in into:
            raise InvariantError(f"node id {nid} duplicated across the snapshot document")
        into.add(nid)
    for frame in snap.frames.values():
        _collect_ids(frame, into)


def snapshot_from_dict(doc: dict, *, _depth: int = 0) -> PageSnapshot:
    """Build and validate a PageSnapshot from a decoded snapshot document."""
    for key in ("url", "viewport", "captured_at", "nodes"):
        _require(key in doc, f"snapshot document missing key {key!r}")
    _require(isinstance(doc["url"], str), "url must be a string")
    viewport = doc["viewport"]
    _require(
        isinstance(viewport, dict)
        and isinstance(viewport.get("width"), int)
        and isinstance(viewport.get("height"), int),
        "viewport must carry integer width and height",
    )
    _require(isinstance(doc["captured_at"], str), "captured_at must be an RFC 3339 string")
    _require(isinstance(doc["nodes"], list) and doc["nodes"], "nodes must be a non-empty array")

    nodes: dict[int, ElementNode] = {}
    frames: dict[int, PageSnapshot] = {}
    for entry in doc["nodes"]:
        node, frame_doc = _parse_node(entry)
        if node.node_id in nodes:
            raise InvariantError(f"duplicate node id {node.node_id}")
        nodes[node.node_id] = node
        if frame_doc is not None and node.tag in _FRAME_CAPABLE_TAGS:
            if _depth == 0:
                frames[node.node_id] = snapshot_from_dict(frame_doc, _depth=1)
            # depth >= 1: deeper nesting dropped

    root = doc.get("root")
    if root is None:
        # Root defaults to the node nobody references.
        referenced = {c for n in nodes.values() for c in n.children}
        candidates = [nid for nid in nodes if nid not in referenced]
        _require(len(candidates) == 1, "snapshot without explicit root must have exactly one unreferenced node")
        root = candidates[0]
    _require(isinstance(root, int) and not isinstance(root, bool), "root must be an integer node id")

    snap = PageSnapshot(
        url=doc["url"],
        viewport_width=viewport["width"],
        viewport_height=viewport["height"],
        root=root,
        nodes=nodes,
        captured_at=doc["captured_at"],
        frames=frames,
    )
    _check_invariants(snap)
    for frame in frames.values():
        _check_invariants(frame)
    if _depth == 0:
        _collect_ids(snap, set())  # ids unique across main document and frames
    return snap


def load_snapshot(raw: bytes | str) -> PageSnapshot:
    """Parse a snapshot document; reject anything violating the model invariants."""
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"snapshot document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("snapshot document must be a JSON object")
    return snapshot_from_dict(doc)


def _node_to_dict(node: ElementNode, frame: Optional[PageSnapshot]) -> dict:
    obj: dict = {
        "id": node.node_id,
        "tag": node.tag,
        "attrs": [[k, v] for k, v in node.attributes],
        "text": node.inner_text,
        "bbox": [node.bbox.top, node.bbox.left, node.bbox.width, node.bbox.height],
        "visible": node.visible,
        "interactive": node.interactive,
        "children": list(node.children),
        "dom_order": node.dom_order,
    }
    if frame is not None:
        obj["frame"] = snapshot_to_dict(frame)
    return obj


def snapshot_to_dict(snap: PageSnapshot) -> dict:
    return {
        "url": snap.url,
        "viewport": {"width": snap.viewport_width, "height": snap.viewport_height},
        "captured_at": snap.captured_at,
        "root": snap.root,
        "nodes": [
            _node_to_dict(node, snap.frames.get(node.node_id))
            for node in snap.in_dom_order()
        ],
    }


def serialize_snapshot(snap: PageSnapshot) -> bytes:
    """Deterministic byte serialization; inverse of load_snapshot."""
    return json.dumps(snapshot_to_dict(snap), separators=(",", ":"), sort_keys=False).encode("utf-8")


# --- lexicon ---

_CANDIDATE_CLASSES = frozenset({"entrance", "account", "password"})


def _lexicon_from_dict(doc: dict) -> KeywordLexicon:
    _require(isinstance(doc.get("positive"), dict), "lexicon positive must be a keyword -> class array map")
    _require(isinstance(doc.get("deprecation"), list), "lexicon deprecation must be a string array")
    positive: dict[str, frozenset[str]] = {}
    for keyword, classes in doc["positive"].items():
        _require(isinstance(keyword, str) and keyword, "positive keyword must be a non-empty string")
        _require(
            isinstance(classes, list) and all(isinstance(c, str) for c in classes),
            f"classes for keyword {keyword!r} must be a string array",
        )
        bad = set(classes) - _CANDIDATE_CLASSES
        _require(not bad, f"unknown candidate classes for {keyword!r}: {sorted(bad)}")
        positive[keyword] = frozenset(classes)
    deprecation = []
    for keyword in doc["deprecation"]:
        _require(isinstance(keyword, str) and keyword, "deprecation keyword must be a non-empty string")
        deprecation.append(keyword)
    return KeywordLexicon(positive=positive, deprecation=frozenset(deprecation))


def load_lexicon(path: str) -> KeywordLexicon:
    with open(path, "rb") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"lexicon file is not valid JSON: {exc}") from exc
    return _lexicon_from_dict(doc)


def default_lexicon() -> KeywordLexicon:
    """The pinned default lexicon shipped with the package.

    The original keyword list was never published in full; this reconstruction
    is versioned data (data/lexicon.json) and can be overridden per scan.
    """
    doc = json.loads(resources.files("cdnpass.data").joinpath("lexicon.json").read_text("utf-8"))
    return _lexicon_from_dict(doc)
