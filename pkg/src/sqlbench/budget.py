"""Token counting, column partitioning and the two truncation strategies.

The default counter is a frozen, dependency-free segmentation: alphanumeric
runs are one token each and every other non-space character is its own
token. Any model tokenizer can be plugged in behind the same callable
contract; all budget logic is counter-agnostic.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .schema import DatabaseCatalog
from .skeleton import tokenize

logger = logging.getLogger(__name__)

DEFAULT_MAX_CONTEXT = 2048
DEFAULT_RESPONSE_RESERVE = 200

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

TokenCounter = Callable[[str], int]


class UnsatisfiableBudget(RuntimeError):
    pass


class NonpositiveSimilarity(ValueError):
    pass


def count_tokens(text: str) -> int:
    return len(_TOKEN_RE.findall(text))


def derive_seed(*parts) -> int:
    """Fold run seed + per-instance identifiers into one stable child seed."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class TokenBudget:
    max_context: int = DEFAULT_MAX_CONTEXT
    response_reserve: int = DEFAULT_RESPONSE_RESERVE

    def __post_init__(self) -> None:
        if not self.max_context > self.response_reserve > 0:
            raise ValueError("require max_context > response_reserve > 0")

    @property
    def available(self) -> int:
        """Prompt-side allowance: context length minus the response reserve."""
        return self.max_context - self.response_reserve


@dataclass(frozen=True)
class ColumnPartition:
    target: frozenset[tuple[str, str]]
    non_target: frozenset[tuple[str, str]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "target", frozenset(self.target))
        object.__setattr__(self, "non_target", frozenset(self.non_target))
        if self.target & self.non_target:
            raise ValueError("target and non_target overlap")


@dataclass(frozen=True)
class TruncationPlan:
    rates: tuple[float, ...]
    temperature: float = 1.0


@dataclass(frozen=True)
class TruncationRecord:
    removed_columns: tuple[tuple[tuple[str, str], ...], ...]
    tokens_before: int
    tokens_after: int

    @property
    def total_removed(self) -> int:
        return sum(len(section) for section in self.removed_columns)

    @property
    def target_removed(self) -> int:
        return len(self.removed_columns[0]) if self.removed_columns else 0

    @property
    def example_removed(self) -> int:
        return sum(len(section) for section in self.removed_columns[1:])


_STOPWORDS = frozenset({
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "how",
    "in", "is", "it", "of", "on", "or", "that", "the", "to", "was", "were",
    "what", "which", "who", "with",
})


def _link_words(text: str) -> set[str]:
    words = {w.lower() for w in re.findall(r"[A-Za-z0-9]{2,}", text)}
    return words - _STOPWORDS


def _sql_identifiers(sql: str) -> set[str]:
    names: set[str] = set()
    for token in tokenize(sql):
        if token.kind != "identifier":
            continue
        text = token.text
        if text[0] in "\"`[":
            text = text[1:-1]
        names.add(text.lower())
    return names


def partition_columns(
    catalog: DatabaseCatalog,
    reference_sql: Optional[str] = None,
    question: str = "",
) -> ColumnPartition:
    """Split catalog columns into crucial (target) and removable sets.

    With a reference SQL (training path) the target set holds every column
    the SQL mentions by name. Without one (inference path) it holds columns
    whose name or description shares a normalized word with the question
    text. Primary-key and foreign-key columns are always target.
    """
    target = catalog.key_columns()
    if reference_sql:
        mentioned = _sql_identifiers(reference_sql)
        for table in catalog.tables:
            for column in table.columns:
                if column.name.lower() in mentioned:
                    target.add((table.name, column.name))
    else:
        question_words = _link_words(question)
        for table in catalog.tables:
            for column in table.columns:
                column_words = _link_words(column.name)
                if column.description:
                    column_words |= _link_words(column.description)
                if column_words & question_words:
                    target.add((table.name, column.name))
    non_target = catalog.column_set() - target
    return ColumnPartition(frozenset(target), frozenset(non_target))


KeepFilter = dict[str, set[str]]


def full_keep(catalog: DatabaseCatalog) -> KeepFilter:
    return {t.name: {c.name for c in t.columns} for t in catalog.tables}


def truncate_target(
    catalog: DatabaseCatalog,
    partition: ColumnPartition,
    prompt_tokens: Callable[[KeepFilter], int],
    limit: int,
    seed: int,
) -> tuple[KeepFilter, TruncationRecord]:
    """Randomly drop non-target columns until the rendered prompt fits.

    `prompt_tokens` must report the full prompt's token count under a keep
    filter; it is re-evaluated after every removal so the loop stops at the
    first fit. Deterministic for a fixed seed.
    """
    keep = full_keep(catalog)
    removable = sorted(partition.non_target)
    rng = random.Random(seed)
    tokens_before = prompt_tokens(keep)
    tokens = tokens_before
    removed: list[tuple[str, str]] = []
    while tokens > limit:
        if not removable:
            raise UnsatisfiableBudget(
                f"target columns alone need {tokens} tokens (limit {limit})")
        table, column = removable.pop(rng.randrange(len(removable)))
        keep[table].discard(column)
        removed.append((table, column))
        tokens = prompt_tokens(keep)
    record = TruncationRecord((tuple(removed),), tokens_before, tokens)
    return keep, record


def clamp_similarity(value: float, *, floor: float = 1e-6) -> float:
    """Clamp a nonpositive similarity to a small floor before inversion."""
    if value <= 0.0:
        logger.warning("nonpositive similarity %.4f clamped to %g", value, floor)
        return floor
    return value


def plan_example_truncation(
    similarities: Sequence[float],
    temperature: float = 1.0,
) -> TruncationPlan:
    """Compute softmax truncation rates over inverted similarities.

    The target section's self-similarity of 1 is prepended, so k example
    similarities yield k+1 rates. Lower similarity means a strictly higher
    rate; rates always sum to 1.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    for value in similarities:
        if value <= 0:
            raise NonpositiveSimilarity(f"similarity {value} is not in (0, 1]")
    inverted = [1.0 / g for g in (1.0, *similarities)]
    scaled = [x / temperature for x in inverted]
    peak = max(scaled)
    weights = [math.exp(x - peak) for x in scaled]
    total = sum(weights)
    return TruncationPlan(tuple(w / total for w in weights), temperature)


@dataclass
class PromptSection:
    """One truncatable schema section of a prompt (target or example).

    column_costs, when given, carries the token cost of each column's
    rendered line so the quota loop can account for removals without
    re-rendering the whole prompt (see schema.column_line_costs). The
    budget guarantee never depends on it: the outer loop always re-checks
    the true full rendering.
    """

    catalog: DatabaseCatalog
    partition: ColumnPartition
    column_costs: Optional[dict[tuple[str, str], int]] = None
    keep: KeepFilter = field(init=False)

    def __post_init__(self) -> None:
        self.keep = full_keep(self.catalog)


def truncate_examples(
    sections: Sequence[PromptSection],
    plan: TruncationPlan,
    render_prompt: Callable[[Sequence[KeepFilter]], str],
    limit: int,
    seed: int,
    counter: TokenCounter = count_tokens,
) -> tuple[list[KeepFilter], TruncationRecord]:
    """Apportion the token excess across sections proportionally to rates.

    sections[0] is the target, the rest are examples in prompt order; rates
    align by index. Each section sheds random non-target columns until its
    token quota is met or its removable set is exhausted, with leftover
    excess re-apportioned over the remaining sections by renormalized
    rates. The final prompt always fits the limit or the call fails.
    """
    if len(sections) != len(plan.rates):
        raise ValueError(
            f"{len(sections)} sections but {len(plan.rates)} truncation rates")

    keeps = [dict(section.keep) for section in sections]
    removables = [sorted(section.partition.non_target) for section in sections]
    rng = random.Random(seed)
    removed: list[list[tuple[str, str]]] = [[] for _ in sections]

    tokens_before = counter(render_prompt(keeps))
    tokens = tokens_before
    excess = tokens - limit
    active = [i for i in range(len(sections)) if removables[i]]

    while excess > 0:
        if not active:
            raise UnsatisfiableBudget(
                f"prompt needs {tokens} tokens with all removable columns gone "
                f"(limit {limit})")
        total_rate = sum(plan.rates[i] for i in active)
        for i in list(active):
            quota = excess * plan.rates[i] / total_rate
            costs = sections[i].column_costs
            freed = 0.0
            while freed < quota and removables[i]:
                table, column = removables[i].pop(rng.randrange(len(removables[i])))
                keeps[i][table].discard(column)
                removed[i].append((table, column))
                if costs is not None:
                    freed += costs[(table, column)]
                else:
                    new_tokens = counter(render_prompt(keeps))
                    freed += tokens - new_tokens
                    tokens = new_tokens
            if not removables[i]:
                active.remove(i)
        tokens = counter(render_prompt(keeps))
        excess = tokens - limit

    record = TruncationRecord(
        tuple(tuple(section) for section in removed), tokens_before, tokens)
    return keeps, record
