"""Activity events and per-crowd policies.

A crowd policy decides how a raw event maps onto the expertise and
availability counters: what counts as a post, which posts are original,
and when an answer is considered correct.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

KINDS = ("post", "answer", "question", "blog")


class PolicyMismatchError(ValueError):
    """Event classified under the policy of a different crowd."""


class EventValidationError(ValueError):
    pass


def normalize_topic(label: str) -> str:
    topic = " ".join(str(label).split()).lower()
    if not topic:
        raise EventValidationError("empty topic label")
    return topic


@dataclass(frozen=True, order=True)
class UserId:
    crowd: str
    handle: str

    def __post_init__(self):
        if not self.crowd:
            raise EventValidationError("empty crowd id")
        if not self.handle:
            raise EventValidationError("empty user handle")

    def __str__(self) -> str:
        return f"{self.crowd}:{self.handle}"


@dataclass(frozen=True)
class ActivityEvent:
    event_id: str
    crowd: str
    author: UserId
    timestamp: float
    kind: str
    topics: tuple[str, ...] = ()
    conversational: bool = False
    repost: bool = False
    addressed_to: Optional[UserId] = None
    in_reply_to: Optional[str] = None
    upvotes: int = 0
    correct_label: Optional[bool] = None
    text: Optional[str] = None

    def __post_init__(self):
        if not self.event_id:
            raise EventValidationError("empty event_id")
        if not self.timestamp > 0:
            raise EventValidationError(f"timestamp must be positive, got {self.timestamp!r}")
        if self.kind not in KINDS:
            raise EventValidationError(f"unknown kind {self.kind!r}")
        if self.upvotes < 0:
            raise EventValidationError("upvotes must be non-negative")
        if self.kind == "answer" and not self.in_reply_to:
            raise EventValidationError("answer without in_reply_to")
        if self.repost and self.conversational:
            raise EventValidationError("a repost cannot be conversational")
        if self.author.crowd != self.crowd:
            raise EventValidationError("author belongs to a different crowd")


@dataclass(frozen=True)
class UpvoteThreshold:
    k: int = 2

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("upvote threshold must be >= 1")


@dataclass(frozen=True)
class ExplicitLabel:
    pass


Correctness = Union[UpvoteThreshold, ExplicitLabel]


@dataclass(frozen=True)
class AskTemplate:
    strategy: str = "plain"  # introduce_then_ask | greet_then_ask | plain
    prefix: str = ""
    suffix: str = ""
    max_length: Optional[int] = None

    def __post_init__(self):
        if self.strategy not in ("introduce_then_ask", "greet_then_ask", "plain"):
            raise ValueError(f"unknown ask strategy {self.strategy!r}")
        if self.max_length is not None and self.max_length < 40:
            raise ValueError("max_length must be at least 40")


GREET_TEMPLATE = AskTemplate(
    strategy="greet_then_ask", prefix="Hi @{handle}!", suffix="#ask #{tag}", max_length=140
)
INTRODUCE_TEMPLATE = AskTemplate(
    strategy="introduce_then_ask",
    prefix="@{handle} We route questions to people who know {topic} well.",
    suffix="#ask #{tag}",
    max_length=140,
)
PLAIN_TEMPLATE = AskTemplate()


@dataclass(frozen=True)
class CrowdPolicy:
    crowd: str
    correctness: Correctness = field(default_factory=ExplicitLabel)
    upvote_weighting: bool = False
    post_kinds: frozenset = frozenset(KINDS)
    original_kinds: frozenset = frozenset(KINDS)
    question_is_original: bool = True
    topic_source: str = "tags"  # "text": substring match at ingestion; "tags": trust event topics
    message_template: AskTemplate = PLAIN_TEMPLATE

    def __post_init__(self):
        if self.topic_source not in ("text", "tags"):
            raise ValueError(f"unknown topic_source {self.topic_source!r}")


def twitter_like_policy(crowd: str = "twitter-like", template: AskTemplate = GREET_TEMPLATE) -> CrowdPolicy:
    """Every tweet is a post; correctness is judged manually."""
    return CrowdPolicy(
        crowd=crowd,
        correctness=ExplicitLabel(),
        upvote_weighting=False,
        question_is_original=True,
        topic_source="text",
        message_template=template,
    )


def quora_like_policy(crowd: str = "quora-like", k: int = 2) -> CrowdPolicy:
    """Answers with at least ``k`` upvotes are correct; questions are never original."""
    return CrowdPolicy(
        crowd=crowd,
        correctness=UpvoteThreshold(k),
        upvote_weighting=True,
        original_kinds=frozenset({"answer", "blog", "post"}),
        question_is_original=False,
        topic_source="tags",
        message_template=PLAIN_TEMPLATE,
    )


@dataclass(frozen=True)
class EventClassification:
    is_post: bool = False
    is_original_post: bool = False
    is_conversational_post: bool = False
    is_answer: bool = False
    is_correct_answer: bool = False
    is_question: bool = False


def classify_event(e: ActivityEvent, p: CrowdPolicy) -> EventClassification:
    if e.crowd != p.crowd:
        raise PolicyMismatchError(f"event from crowd {e.crowd!r} classified with policy for {p.crowd!r}")

    is_post = e.kind in p.post_kinds
    original_kinds = set(p.original_kinds)
    if not p.question_is_original:
        original_kinds.discard("question")
    is_original = is_post and not e.conversational and not e.repost and e.kind in original_kinds
    is_conversational = is_post and e.conversational

    is_answer = e.kind == "answer"
    if isinstance(p.correctness, UpvoteThreshold):
        correct = e.upvotes >= p.correctness.k
    else:
        correct = e.correct_label is True

    return EventClassification(
        is_post=is_post,
        is_original_post=is_original,
        is_conversational_post=is_conversational,
        is_answer=is_answer,
        is_correct_answer=is_answer and correct,
        is_question=e.kind == "question",
    )


def event_weight(e: ActivityEvent, p: CrowdPolicy) -> int:
    """Upvote weight applied to original-post and correct-answer tallies."""
    if p.upvote_weighting:
        return 1 + e.upvotes
    return 1


@dataclass(frozen=True)
class ClassifiedEvent:
    event: ActivityEvent
    flags: EventClassification
    weight: int = 1

    @property
    def ts(self) -> float:
        return self.event.timestamp

    @property
    def topics(self) -> tuple[str, ...]:
        return self.event.topics
