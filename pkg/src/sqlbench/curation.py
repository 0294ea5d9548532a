"""Few-shot example curation.

Each pool candidate is scored by the average of three cosine similarities
against the target: question vs question, rendered schema vs rendered
schema, and the target's draft SQL vs the candidate's gold SQL. The top-k
by average similarity are kept and emitted in ascending order, so the most
similar example sits last, nearest the target block.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .bench import TaskInstance
from .schema import DatabaseCatalog, SchemaVariant, render_schema


class ZeroVector(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


EmbeddingFn = Callable[[Sequence[str]], Sequence[Sequence[float]]]


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if va.shape != vb.shape or va.ndim != 1:
        raise DimensionMismatch(f"vector shapes differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    value = float(np.dot(va, vb) / (na * nb))
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class SimilarityTriple:
    candidate_index: int
    gamma_q: float
    gamma_d: float
    gamma_s: float

    @property
    def gamma_a(self) -> float:
        return (self.gamma_q + self.gamma_d + self.gamma_s) / 3


@dataclass(frozen=True)
class PoolCandidate:
    instance: TaskInstance
    catalog: DatabaseCatalog
    question_vec: tuple[float, ...]
    schema_vec: tuple[float, ...]
    sql_vec: tuple[float, ...]


@dataclass(frozen=True)
class ExamplePool:
    candidates: tuple[PoolCandidate, ...]
    variant: SchemaVariant = SchemaVariant.C_VDT

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        dims = {
            len(vec)
            for cand in self.candidates
            for vec in (cand.question_vec, cand.schema_vec, cand.sql_vec)
        }
        if len(dims) > 1:
            raise DimensionMismatch(f"pool embeddings have mixed dimensions: {sorted(dims)}")


class EmbeddingCache:
    """Disk cache of embeddings keyed by (text digest, embedding model id).

    Append-only JSONL of {hash, dim, vector}; concurrent readers share the
    in-memory index while writes take the lock. Avoids re-billing the
    embedding endpoint for texts it has already seen.
    """

    def __init__(self, path: Path, model_id: str):
        self.path = Path(path)
        self.model_id = model_id
        self._vectors: dict[str, tuple[float, ...]] = {}
        self._lock = threading.Lock()
        if self.path.is_file():
            with open(self.path, encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    raw = json.loads(line)
                    self._vectors.setdefault(raw["hash"], tuple(raw["vector"]))

    def _key(self, text: str) -> str:
        payload = text.encode("utf-8") + b"\x00" + self.model_id.encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def fetch(self, texts: Sequence[str], embed: EmbeddingFn) -> list[tuple[float, ...]]:
        """Return embeddings for texts, calling `embed` only for cache misses."""
        keys = [self._key(text) for text in texts]
        missing = [i for i, key in enumerate(keys) if key not in self._vectors]
        if missing:
            fresh = embed([texts[i] for i in missing])
            if len(fresh) != len(missing):
                raise DimensionMismatch(
                    f"embedder returned {len(fresh)} vectors for {len(missing)} texts")
            with self._lock:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as handle:
                    for i, vector in zip(missing, fresh):
                        tup = tuple(float(x) for x in vector)
                        if keys[i] not in self._vectors:
                            self._vectors[keys[i]] = tup
                            handle.write(json.dumps({
                                "hash": keys[i],
                                "dim": len(tup),
                                "vector": list(tup),
                            }) + "\n")
        return [self._vectors[key] for key in keys]


def build_pool(
    candidates: Sequence[tuple[TaskInstance, DatabaseCatalog]],
    variant: SchemaVariant,
    embed: EmbeddingFn,
    cache: Optional[EmbeddingCache] = None,
) -> ExamplePool:
    """Embed question, rendered schema and gold SQL for every candidate."""
    texts: list[str] = []
    for instance, catalog in candidates:
        texts.extend((
            instance.question,
            render_schema(catalog, variant),
            instance.gold_sql,
        ))
    if cache is not None:
        vectors = cache.fetch(texts, embed)
    else:
        vectors = [tuple(float(x) for x in v) for v in embed(texts)]
    pool_candidates = []
    for i, (instance, catalog) in enumerate(candidates):
        q, d, s = vectors[3 * i], vectors[3 * i + 1], vectors[3 * i + 2]
        pool_candidates.append(PoolCandidate(instance, catalog, tuple(q), tuple(d), tuple(s)))
    return ExamplePool(tuple(pool_candidates), variant)


def score_candidates(
    target: TaskInstance,
    target_catalog: DatabaseCatalog,
    draft_sql: str,
    pool: ExamplePool,
    embed: EmbeddingFn,
    cache: Optional[EmbeddingCache] = None,
) -> list[SimilarityTriple]:
    """Score every cross-domain pool candidate against the target.

    Candidates sharing the target's database id are filtered out before
    scoring. The draft SQL is the model's zero-shot prediction for the
    target question.
    """
    texts = [target.question, render_schema(target_catalog, pool.variant), draft_sql]
    if cache is not None:
        target_q, target_d, target_s = cache.fetch(texts, embed)
    else:
        target_q, target_d, target_s = [tuple(float(x) for x in v) for v in embed(texts)]

    triples: list[SimilarityTriple] = []
    for index, candidate in enumerate(pool.candidates):
        if candidate.instance.database_id == target.database_id:
            continue
        triples.append(SimilarityTriple(
            candidate_index=index,
            gamma_q=cosine(target_q, candidate.question_vec),
            gamma_d=cosine(target_d, candidate.schema_vec),
            gamma_s=cosine(target_s, candidate.sql_vec),
        ))
    return triples


@dataclass(frozen=True)
class CuratedSet:
    examples: tuple[tuple[Optional[TaskInstance], SimilarityTriple], ...]
    k: int

    @property
    def triples(self) -> tuple[SimilarityTriple, ...]:
        return tuple(triple for _, triple in self.examples)

    @property
    def similarities(self) -> tuple[float, ...]:
        return tuple(triple.gamma_a for _, triple in self.examples)


def select_top_k(
    triples: Sequence[SimilarityTriple],
    k: int,
    pool: Optional[ExamplePool] = None,
) -> CuratedSet:
    """Keep the k highest-average candidates, emitted ascending.

    Ties on the average break toward the lower candidate index. A k larger
    than the pool returns everything; k=0 reverts to zero-shot.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    ranked = sorted(triples, key=lambda t: (-t.gamma_a, t.candidate_index))
    selected = sorted(ranked[:k], key=lambda t: (t.gamma_a, t.candidate_index))
    examples = tuple(
        (pool.candidates[t.candidate_index].instance if pool is not None else None, t)
        for t in selected
    )
    return CuratedSet(examples, k)
