"""Login-flow detection: filter, classify, and score page elements, then plan
how to submit throwaway credentials.

The pipeline is a pure function of (snapshot, lexicon, weights); every score
carries a per-feature trace so a candidate ranking can be explained.
"""

from __future__ import annotations

import enum
import json
import secrets
import string
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Union

from .errors import DepthExceeded, InvariantError, SchemaError
from .snapshot import (
    ElementNode,
    KeywordLexicon,
    PageSnapshot,
    count_phrase,
    default_lexicon,
    keyword_frequencies,
    tokenize,
)

__all__ = [
    "CandidateClass",
    "ScoredCandidate",
    "DetectionResult",
    "Credentials",
    "generate_credentials",
    "Fill",
    "PressEnter",
    "Click",
    "Recurse",
    "ActionPlan",
    "ScoringWeights",
    "default_weights",
    "load_weights",
    "filter_candidates",
    "classify",
    "score",
    "detect",
    "plan_actions",
    "MAX_DEPTH",
]

FILTER_TAGS = frozenset({"input", "button", "label", "a", "iframe"})
VIEWPORT_FACTOR = 1.5
MAX_DEPTH = 2

# Elements carrying sign-up vocabulary are rejected for the entrance class
# only; a sign-up link must never be clicked in place of a login entrance.
SIGNUP_VETO_PHRASES = (("register",), ("signup",), ("sign", "up"))

_ENTRANCE_INPUT_TYPES = frozenset({"submit", "button", "image"})
_TEXT_INPUT_TYPES = frozenset({"text", "email", ""})


class CandidateClass(enum.Enum):
    ENTRANCE = "entrance"
    ACCOUNT = "account"
    PASSWORD = "password"


@dataclass(frozen=True)
class ScoringWeights:
    visible: int = 3
    interactive: int = 3
    keyword_occurrence: int = 2
    keyword_occurrence_cap: int = 3
    long_text_penalty: int = -1
    long_text_threshold: int = 40
    input_type_match: int = 4


def load_weights(path: str) -> ScoringWeights:
    with open(path, "rb") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"weights file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("weights file must be a JSON object")
    known = {f for f in ScoringWeights.__dataclass_fields__}
    values = {k: v for k, v in doc.items() if k in known}
    for key, value in values.items():
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaError(f"weight {key!r} must be an integer")
    return ScoringWeights(**values)


def default_weights() -> ScoringWeights:
    doc = json.loads(resources.files("cdnpass.data").joinpath("weights.json").read_text("utf-8"))
    return ScoringWeights(**{k: v for k, v in doc.items() if k in ScoringWeights.__dataclass_fields__})


@dataclass(frozen=True)
class ScoredCandidate:
    node_id: int
    candidate_class: CandidateClass
    score: int
    feature_trace: dict[str, int]

    def __post_init__(self) -> None:
        if self.score != sum(self.feature_trace.values()):
            raise InvariantError("candidate score must equal the sum of its feature trace")
        for required in ("keyword_frequency", "visible", "interactive", "inner_text_length"):
            if required not in self.feature_trace:
                raise InvariantError(f"feature trace missing {required!r}")

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "class": self.candidate_class.value,
            "score": self.score,
            "feature_trace": dict(self.feature_trace),
        }


@dataclass(frozen=True)
class DetectionResult:
    page_url: str
    entrances: tuple[ScoredCandidate, ...]
    account_inputs: tuple[ScoredCandidate, ...]
    password_inputs: tuple[ScoredCandidate, ...]

    def to_dict(self) -> dict:
        return {
            "page_url": self.page_url,
            "entrances": [c.to_dict() for c in self.entrances],
            "account_inputs": [c.to_dict() for c in self.account_inputs],
            "password_inputs": [c.to_dict() for c in self.password_inputs],
        }


@dataclass(frozen=True)
class Credentials:
    account: str
    password: str

    def __post_init__(self) -> None:
        if not self.account or not self.password:
            raise InvariantError("credentials must be non-empty")
        if len(self.password) < 16:
            raise InvariantError("password must be at least 16 characters")


_ACCOUNT_ALPHABET = string.ascii_lowercase + string.digits
_PASSWORD_ALPHABET = string.ascii_letters + string.digits + string.punctuation


def generate_credentials() -> Credentials:
    """Fresh throwaway credentials, random enough to never collide with a
    real account: 24 lowercase alphanumerics and 16 printable ASCII chars."""
    account = "".join(secrets.choice(_ACCOUNT_ALPHABET) for _ in range(24))
    password = "".join(secrets.choice(_PASSWORD_ALPHABET) for _ in range(16))
    return Credentials(account=account, password=password)


def account_value_for(element: Optional[ElementNode], creds: Credentials) -> str:
    """The account string to type; formatted as an email address when the
    target input demands one."""
    if element is not None:
        itype = (element.attr("type") or "").lower()
        wants_email = itype == "email" or any(
            "email" in tokenize(v) for _, v in element.attributes
        )
        if wants_email:
            return f"{creds.account}@example.com"
    return creds.account


# --- action plan ---

@dataclass(frozen=True)
class Fill:
    node_id: int
    role: str  # "account" | "password"


@dataclass(frozen=True)
class PressEnter:
    node_id: int


@dataclass(frozen=True)
class Click:
    node_id: int


@dataclass(frozen=True)
class Recurse:
    """Marker: re-run detection on the page the preceding click navigates to."""


Step = Union[Fill, PressEnter, Click, Recurse]


@dataclass(frozen=True)
class ActionPlan:
    steps: tuple[Step, ...]
    max_depth: int = MAX_DEPTH

    def __post_init__(self) -> None:
        fills = [s for s in self.steps if isinstance(s, Fill)]
        if fills:
            if not isinstance(self.steps[-1], PressEnter):
                raise InvariantError("a plan with fill steps must end with a key press")
        else:
            kinds = tuple(type(s) for s in self.steps)
            if kinds != (Click, Recurse):
                raise InvariantError("a plan without fill steps must be exactly click-then-recurse")

    @property
    def submits(self) -> bool:
        return any(isinstance(s, PressEnter) for s in self.steps)


# --- filtering ---

def _within_band(top: float, viewport_height: int) -> bool:
    return top <= VIEWPORT_FACTOR * viewport_height


def filter_candidates(page: PageSnapshot) -> list[ElementNode]:
    """Keep only elements with login-relevant tags placed within one and a
    half viewport heights of the document top, in document order."""
    return [
        node
        for node in page.in_dom_order()
        if node.tag in FILTER_TAGS and _within_band(node.bbox.top, page.viewport_height)
    ]


# --- classification ---

def _classes_hit(freq: dict[str, int], lexicon: KeywordLexicon) -> set[str]:
    hit: set[str] = set()
    for keyword, count in freq.items():
        if count > 0 and keyword in lexicon.positive:
            hit |= lexicon.positive[keyword]
    return hit


def _signup_vetoed(element: ElementNode) -> bool:
    streams = [tokenize(v) for _, v in element.attributes]
    streams.append(tokenize(element.inner_text))
    return any(count_phrase(stream, phrase) for stream in streams for phrase in SIGNUP_VETO_PHRASES)


def classify(
    element: ElementNode,
    freq: dict[str, int],
    lexicon: Optional[KeywordLexicon] = None,
) -> Optional[CandidateClass]:
    """Assign one of the three candidate classes, or none.

    Any deprecation keyword hit vetoes the element outright; sign-up
    vocabulary vetoes the entrance class only.
    """
    lexicon = lexicon or default_lexicon()
    if any(freq.get(k, 0) > 0 for k in lexicon.deprecation):
        return None
    hit = _classes_hit(freq, lexicon)
    tag = element.tag
    if tag == "input":
        itype = (element.attr("type") or "").lower()
        if itype == "password":
            return CandidateClass.PASSWORD
        if itype in _ENTRANCE_INPUT_TYPES:
            if "entrance" in hit and not _signup_vetoed(element):
                return CandidateClass.ENTRANCE
            return None
        if itype in _TEXT_INPUT_TYPES:
            if "password" in hit:
                return CandidateClass.PASSWORD
            if "account" in hit:
                return CandidateClass.ACCOUNT
        return None
    if tag in ("a", "button", "label"):
        if "entrance" in hit and not _signup_vetoed(element):
            return CandidateClass.ENTRANCE
        return None
    return None


# --- scoring ---

def _relevant_keyword_count(
    freq: dict[str, int], candidate_class: CandidateClass, lexicon: KeywordLexicon
) -> int:
    return sum(
        count
        for keyword, count in freq.items()
        if keyword in lexicon.positive and candidate_class.value in lexicon.positive[keyword]
    )


def score(
    element: ElementNode,
    candidate_class: CandidateClass,
    freq: dict[str, int],
    *,
    lexicon: Optional[KeywordLexicon] = None,
    weights: Optional[ScoringWeights] = None,
) -> ScoredCandidate:
    """Score a classified element; monotone in keyword counts and in the
    visible/interactive flags."""
    lexicon = lexicon or default_lexicon()
    w = weights or default_weights()
    trace: dict[str, int] = {}
    count = _relevant_keyword_count(freq, candidate_class, lexicon)
    trace["keyword_frequency"] = w.keyword_occurrence * min(count, w.keyword_occurrence_cap)
    trace["visible"] = w.visible if element.visible else 0
    trace["interactive"] = w.interactive if element.interactive else 0
    long_text = (
        candidate_class is CandidateClass.ENTRANCE
        and len(element.inner_text) > w.long_text_threshold
    )
    trace["inner_text_length"] = w.long_text_penalty if long_text else 0
    itype = (element.attr("type") or "").lower()
    if element.tag == "input" and (
        (candidate_class is CandidateClass.PASSWORD and itype == "password")
        or (candidate_class is CandidateClass.ACCOUNT and itype == "email")
    ):
        trace["input_type"] = w.input_type_match
    return ScoredCandidate(
        node_id=element.node_id,
        candidate_class=candidate_class,
        score=sum(trace.values()),
        feature_trace=trace,
    )


# --- detection pipeline ---

@dataclass(frozen=True)
class _Placed:
    """A filtered element plus its document position across one iframe level."""

    element: ElementNode
    doc_pos: tuple[int, int, int]  # (anchor dom_order, frame flag, inner dom_order)


def _placed_candidates(page: PageSnapshot) -> list[_Placed]:
    placed: list[_Placed] = []
    for node in page.in_dom_order():
        if node.tag not in FILTER_TAGS:
            continue
        if not _within_band(node.bbox.top, page.viewport_height):
            continue
        placed.append(_Placed(node, (node.dom_order, 0, 0)))
        frame = page.frames.get(node.node_id)
        if frame is None:
            continue
        # One-level iframe content participates at the iframe's position,
        # with geometry translated into the parent document space.
        for inner in frame.in_dom_order():
            if inner.tag not in FILTER_TAGS:
                continue
            if not _within_band(node.bbox.top + inner.bbox.top, page.viewport_height):
                continue
            placed.append(_Placed(inner, (node.dom_order, 1, inner.dom_order)))
    return placed


def detect(
    page: PageSnapshot,
    lexicon: Optional[KeywordLexicon] = None,
    weights: Optional[ScoringWeights] = None,
) -> DetectionResult:
    """Filter, classify, and score a snapshot (including one iframe level);
    each class is sorted by score, ties broken by document position."""
    lexicon = lexicon or default_lexicon()
    weights = weights or default_weights()
    buckets: dict[CandidateClass, list[tuple[ScoredCandidate, tuple[int, int, int]]]] = {
        c: [] for c in CandidateClass
    }
    for placed in _placed_candidates(page):
        freq = keyword_frequencies(placed.element, lexicon)
        candidate_class = classify(placed.element, freq, lexicon)
        if candidate_class is None:
            continue
        scored = score(placed.element, candidate_class, freq, lexicon=lexicon, weights=weights)
        buckets[candidate_class].append((scored, placed.doc_pos))

    def ordered(candidate_class: CandidateClass) -> tuple[ScoredCandidate, ...]:
        ranked = sorted(buckets[candidate_class], key=lambda item: (-item[0].score, item[1]))
        return tuple(scored for scored, _ in ranked)

    return DetectionResult(
        page_url=page.url,
        entrances=ordered(CandidateClass.ENTRANCE),
        account_inputs=ordered(CandidateClass.ACCOUNT),
        password_inputs=ordered(CandidateClass.PASSWORD),
    )


def plan_actions(
    result: DetectionResult,
    creds: Credentials,
    depth_used: int,
    max_depth: int = MAX_DEPTH,
) -> Optional[ActionPlan]:
    """Turn a detection result into the next interaction plan.

    With a password input present, fill credentials and press ENTER; with only
    entrances and remaining depth budget, click the top entrance and recurse;
    otherwise the site is recorded as login-not-found (None).
    """
    if depth_used > max_depth:
        raise DepthExceeded(f"depth_used={depth_used} exceeds max_depth={max_depth}")
    if result.password_inputs:
        steps: list[Step] = []
        if result.account_inputs:
            steps.append(Fill(result.account_inputs[0].node_id, "account"))
        top_password = result.password_inputs[0].node_id
        steps.append(Fill(top_password, "password"))
        steps.append(PressEnter(top_password))
        return ActionPlan(steps=tuple(steps), max_depth=max_depth)
    if result.entrances and depth_used < max_depth:
        return ActionPlan(steps=(Click(result.entrances[0].node_id), Recurse()), max_depth=max_depth)
    return None
