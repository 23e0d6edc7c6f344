"""Semantic corpus subspace: SVD basis, projector, and projected loss.

The projector maps features onto the span of a corpus of text embeddings;
both modalities are projected symmetrically before the dot-product loss.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import similarity_loss

SV_CUTOFF_REL = 1e-10
PROJECTOR_TOL = 1e-9


class DegenerateCorpusError(ValueError):
    """Corpus embedding matrix has no usable span (e.g. all zeros)."""


@dataclass(frozen=True)
class SemanticCorpus:
    texts: tuple[tuple[int, ...], ...]
    source_size: int
    proportion: float

    def __post_init__(self):
        if not (1 <= len(self.texts) <= self.source_size):
            raise ValueError("corpus size must satisfy 1 <= N <= M")

    def __len__(self) -> int:
        return len(self.texts)


@dataclass(frozen=True)
class ProjectionBasis:
    basis: np.ndarray  # (r, d), orthonormal rows
    projector: np.ndarray  # (d, d), symmetric idempotent
    rank: int

    def project(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.projector.shape[0],):
            raise ValueError(
                f"dimension mismatch: vector {v.shape} vs projector {self.projector.shape}"
            )
        return self.projector @ v

    @property
    def dim(self) -> int:
        return self.projector.shape[0]


def sample_corpus(all_texts, proportion: float, seed) -> SemanticCorpus:
    """Uniform without-replacement sample of ceil(proportion*M) texts."""
    if not (0.0 < proportion <= 1.0):
        raise ValueError("proportion must be in (0, 1]")
    texts = [tuple(int(t) for t in c) for c in all_texts]
    m = len(texts)
    if m == 0:
        raise ValueError("empty text pool")
    n = math.ceil(proportion * m)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(m, size=n, replace=False))
    return SemanticCorpus(tuple(texts[i] for i in idx), m, proportion)


def build_projection(corpus_embeddings: np.ndarray) -> ProjectionBasis:
    """Orthonormal basis of the corpus row span and its projector.

    Right-singular directions with singular value above a relative cutoff
    are kept; an all-zero corpus matrix is rejected.
    """
    emb = np.atleast_2d(np.asarray(corpus_embeddings, dtype=np.float64))
    if emb.size == 0 or not np.all(np.isfinite(emb)):
        raise ValueError("corpus embeddings must be a nonempty finite matrix")
    _, sv, vt = np.linalg.svd(emb, full_matrices=False)
    if sv.size == 0 or sv[0] <= 0.0:
        raise DegenerateCorpusError("corpus embedding matrix is all zero")
    keep = sv > SV_CUTOFF_REL * sv[0]
    basis = vt[keep]
    projector = basis.T @ basis
    return ProjectionBasis(basis=basis, projector=projector, rank=int(keep.sum()))


def project_embedding(v: np.ndarray, pb: ProjectionBasis) -> np.ndarray:
    return pb.project(v)


def projected_similarity_loss(
    img_emb: np.ndarray, txt_emb: np.ndarray, pb: ProjectionBasis
) -> float:
    """Dot-product loss of both embeddings after semantic projection."""
    return similarity_loss(pb.project(img_emb), pb.project(txt_emb))
