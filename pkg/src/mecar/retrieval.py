"""Content-based image retrieval over synthetic feature descriptors.

Images are stand-ins: each object owns ``m`` canonical unit descriptors in
``d`` dimensions drawn from a generator keyed by its id, and a query
"photograph" is the canonical set plus isotropic Gaussian noise.  The
pipeline has the usual shape:

1. a sign-pattern index over the first ``b`` dimensions buckets every corpus
   descriptor;
2. a query's descriptors vote for the images sharing their buckets, giving a
   shortlist;
3. the shortlist is re-ranked with exhaustive descriptor matching;
4. the winner is accepted only if enough query descriptors have a close
   partner in it (an inlier count standing in for geometric verification).

``retrieve`` runs this against the edge database first and the cloud
database second.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DIM = 32
DESCRIPTORS_PER_IMAGE = 16
CODE_BITS = 12
INLIER_COS = 0.9

_CANONICAL_SALT = 0x5EED_C0DE


class RetrievalError(ValueError):
    pass


class RetrievalKind(enum.Enum):
    EDGE_HIT = "edge_hit"
    CLOUD_HIT = "cloud_hit"
    NOT_FOUND = "not_found"


@dataclass(frozen=True)
class RetrievalOutcome:
    kind: RetrievalKind
    matched_object_id: int | None = None
    shortlist_size: int = 0

    def __post_init__(self):
        if (self.matched_object_id is None) != (self.kind is RetrievalKind.NOT_FOUND):
            raise RetrievalError("matched_object_id must be set exactly when something was found")


@dataclass(frozen=True, eq=False)
class ImageRecord:
    object_id: int
    descriptors: np.ndarray  # (m, d), unit rows

    def __post_init__(self):
        desc = np.asarray(self.descriptors, dtype=float)
        if desc.ndim != 2 or desc.shape[0] < 1:
            raise RetrievalError("an image needs at least one descriptor")
        norms = np.linalg.norm(desc, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise RetrievalError("descriptors must have unit length")
        desc.setflags(write=False)
        object.__setattr__(self, "descriptors", desc)

    def __eq__(self, other):
        if not isinstance(other, ImageRecord):
            return NotImplemented
        return self.object_id == other.object_id and np.array_equal(self.descriptors, other.descriptors)

    __hash__ = None


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def canonical_record(object_id: int, dim: int = DIM, m: int = DESCRIPTORS_PER_IMAGE) -> ImageRecord:
    rng = np.random.default_rng([_CANONICAL_SALT, int(object_id), dim, m])
    return ImageRecord(object_id, _unit_rows(rng.standard_normal((m, dim))))


def extract(
    object_id: int,
    noise_sigma: float,
    seed: int,
    dim: int = DIM,
    m: int = DESCRIPTORS_PER_IMAGE,
) -> ImageRecord:
    """Descriptors of a fresh view of ``object_id``.

    Noise is isotropic with per-component deviation ``noise_sigma / sqrt(dim)``
    so the perturbation has norm close to ``noise_sigma``.
    """
    if noise_sigma < 0:
        raise RetrievalError("noise_sigma must be non-negative")
    canon = canonical_record(object_id, dim, m)
    if noise_sigma == 0:
        return canon
    rng = np.random.default_rng([int(seed), int(object_id)])
    noisy = canon.descriptors + rng.standard_normal((m, dim)) * (noise_sigma / math.sqrt(dim))
    return ImageRecord(object_id, _unit_rows(noisy))


def sign_codes(descriptors: np.ndarray, bits: int = CODE_BITS) -> np.ndarray:
    signs = (np.asarray(descriptors)[:, :bits] > 0).astype(np.int64)
    return signs @ (1 << np.arange(bits, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class FeatureIndex:
    """Sign-pattern buckets plus the stacked corpus for exact re-ranking."""

    code_bits: int
    buckets: dict[int, list[tuple[int, int]]]  # code -> [(object_id, descriptor row)]
    object_ids: np.ndarray  # corpus order
    matrix: np.ndarray  # all descriptors stacked, (total, d)
    offsets: np.ndarray  # first row of each corpus image in ``matrix``
    records: dict[int, ImageRecord] = field(repr=False)

    def __len__(self) -> int:
        return len(self.object_ids)

    @property
    def descriptor_count(self) -> int:
        return sum(len(v) for v in self.buckets.values())


def build_index(corpus: Sequence[ImageRecord], code_bits: int = CODE_BITS) -> FeatureIndex:
    if not corpus:
        raise RetrievalError("cannot index an empty corpus")
    ids = [rec.object_id for rec in corpus]
    if len(set(ids)) != len(ids):
        raise RetrievalError("corpus object ids must be unique")
    matrix = np.vstack([rec.descriptors for rec in corpus])
    sizes = np.array([len(rec.descriptors) for rec in corpus])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    owners = np.repeat(np.array(ids), sizes)
    codes = sign_codes(matrix, code_bits)
    buckets: dict[int, list[tuple[int, int]]] = {}
    for row, (code, owner) in enumerate(zip(codes.tolist(), owners.tolist())):
        buckets.setdefault(code, []).append((owner, row))
    matrix.setflags(write=False)
    return FeatureIndex(
        code_bits=code_bits,
        buckets=buckets,
        object_ids=np.array(ids),
        matrix=matrix,
        offsets=offsets,
        records={rec.object_id: rec for rec in corpus},
    )


def vote_counts(query: ImageRecord, index: FeatureIndex) -> dict[int, int]:
    votes: dict[int, int] = {}
    for code in sign_codes(query.descriptors, index.code_bits).tolist():
        for oid in {owner for owner, _ in index.buckets.get(code, ())}:
            votes[oid] = votes.get(oid, 0) + 1
    return votes


def shortlist(query: ImageRecord, index: FeatureIndex, k: int) -> list[int]:
    """Top-``k`` corpus ids by bucket votes, ties to the smaller id.

    Images with no votes still rank (last), so ``k >= len(index)`` returns
    the whole corpus.
    """
    if k < 1:
        raise RetrievalError("k must be at least 1")
    votes = vote_counts(query, index)
    ranked = sorted(index.object_ids.tolist(), key=lambda oid: (-votes.get(oid, 0), oid))
    return ranked[:k]


def _best_cosines(query: ImageRecord, index: FeatureIndex, ids: Iterable[int]) -> dict[int, np.ndarray]:
    """For every candidate, each query descriptor's best cosine in it."""
    ids = list(ids)
    if not ids:
        return {}
    pos = {oid: i for i, oid in enumerate(index.object_ids.tolist())}
    ends = np.append(index.offsets[1:], len(index.matrix))
    rows, starts, n = [], [], 0
    for oid in ids:
        i = pos[oid]
        starts.append(n)
        rows.append(np.arange(index.offsets[i], ends[i]))
        n += len(rows[-1])
    sims = query.descriptors @ index.matrix[np.concatenate(rows)].T
    best = np.maximum.reduceat(sims, np.array(starts), axis=1)
    return {oid: best[:, j] for j, oid in enumerate(ids)}


def _score_from_cosines(best: np.ndarray) -> float:
    return float((1.0 + np.mean(best)) / 2.0)


def pairwise_score(query: ImageRecord, candidate: ImageRecord) -> float:
    """Mean best-match cosine mapped from [-1, 1] onto [0, 1]."""
    best = (query.descriptors @ candidate.descriptors.T).max(axis=1)
    return _score_from_cosines(best)


def _inliers(best: np.ndarray, inlier_cos: float) -> int:
    return int(np.count_nonzero(best >= inlier_cos))


def geometric_verify(
    query: ImageRecord,
    candidate: ImageRecord,
    inlier_cos: float = INLIER_COS,
    min_inliers: int | None = None,
) -> bool:
    if not 0.0 < inlier_cos < 1.0:
        raise RetrievalError("inlier_cos must lie in (0, 1)")
    if min_inliers is None:
        min_inliers = math.ceil(len(query.descriptors) / 2)
    if min_inliers < 1:
        raise RetrievalError("min_inliers must be at least 1")
    best = (query.descriptors @ candidate.descriptors.T).max(axis=1)
    return _inliers(best, inlier_cos) >= min_inliers


def best_match(query: ImageRecord, index: FeatureIndex, k: int) -> tuple[int, np.ndarray, int]:
    """Shortlist, re-rank exhaustively; returns (id, best cosines, shortlist size)."""
    cands = shortlist(query, index, k)
    best = _best_cosines(query, index, cands)
    winner = min(cands, key=lambda oid: (-_score_from_cosines(best[oid]), oid))
    return winner, best[winner], len(cands)


def retrieve(
    query: ImageRecord,
    edge_index: FeatureIndex,
    cloud_index: FeatureIndex,
    k: int = 10,
    inlier_cos: float = INLIER_COS,
    min_inliers: int | None = None,
) -> RetrievalOutcome:
    if min_inliers is None:
        min_inliers = math.ceil(len(query.descriptors) / 2)
    examined = 0
    for index, kind in ((edge_index, RetrievalKind.EDGE_HIT), (cloud_index, RetrievalKind.CLOUD_HIT)):
        winner, best, size = best_match(query, index, k)
        examined += size
        if _inliers(best, inlier_cos) >= min_inliers:
            return RetrievalOutcome(kind, winner, examined)
    return RetrievalOutcome(RetrievalKind.NOT_FOUND, None, examined)


def brute_force_argmax(query: ImageRecord, corpus: Sequence[ImageRecord]) -> int:
    """Reference answer: pairwise score against every image, no index."""
    return min(corpus, key=lambda rec: (-pairwise_score(query, rec), rec.object_id)).object_id


# -- corpus snapshots ---------------------------------------------------------


def export_corpus(corpus: Iterable[ImageRecord], path: str | Path) -> None:
    """One line per image: object id then its m*d descriptor values."""
    with open(path, "w") as fh:
        for rec in corpus:
            values = " ".join(repr(float(v)) for v in rec.descriptors.ravel())
            fh.write(f"{rec.object_id} {values}\n")


def import_corpus(path: str | Path, dim: int = DIM) -> list[ImageRecord]:
    corpus = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            values = np.array([float(v) for v in parts[1:]])
            if values.size == 0 or values.size % dim:
                raise RetrievalError(f"{path}:{lineno}: expected a multiple of {dim} values")
            corpus.append(ImageRecord(int(parts[0]), values.reshape(-1, dim)))
    return corpus
