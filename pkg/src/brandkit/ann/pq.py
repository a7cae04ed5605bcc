"""Product quantization: codebooks, byte codes, asymmetric distances.

A d-dimensional vector is split into m contiguous subvectors of d/m
coordinates; each subspace gets its own k-means codebook of at most 256
centroids, so a code is m bytes. Distances between a raw query and codes
are computed asymmetrically via per-subspace lookup tables without
decoding. Sub-centroids are stored float32 (the on-disk precision); all
distance arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kmeans import kmeans_fit

MAX_KSUB = 256


@dataclass
class PQCodebook:
    m: int
    ksub: int
    sub_centroids: np.ndarray  # (m, ksub, d/m) float32
    # training-time reconstruction distortion; metadata only, not serialized
    distortion: float = 0.0

    def __post_init__(self):
        if self.sub_centroids.shape != (self.m, self.ksub, self.dsub):
            raise ValueError(
                f"sub_centroids shape {self.sub_centroids.shape} != "
                f"({self.m}, {self.ksub}, {self.dsub})"
            )
        if not 1 <= self.ksub <= MAX_KSUB:
            raise ValueError(f"ksub must be in [1, {MAX_KSUB}], got {self.ksub}")

    @property
    def dsub(self) -> int:
        return self.sub_centroids.shape[2]

    @property
    def d(self) -> int:
        return self.m * self.dsub

    def __eq__(self, other) -> bool:
        # distortion is training metadata and excluded on purpose
        if not isinstance(other, PQCodebook):
            return NotImplemented
        return (
            self.m == other.m
            and self.ksub == other.ksub
            and np.array_equal(self.sub_centroids, other.sub_centroids)
        )


def pq_train(points: np.ndarray, m: int, ksub: int, seed: int = 0) -> PQCodebook:
    """Independent k-means per coordinate slice.

    Requires d divisible by m and at least ksub training points. Subspace s
    trains with seed ``seed + s`` so m=1 reduces exactly to a plain k-means
    fit with the caller's seed.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be (n, d), got shape {points.shape}")
    n, d = points.shape
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if d % m != 0:
        raise ValueError(f"dimension {d} not divisible by m={m}")
    if not 1 <= ksub <= MAX_KSUB:
        raise ValueError(f"ksub must be in [1, {MAX_KSUB}], got {ksub}")
    if n < ksub:
        raise ValueError(f"need at least ksub={ksub} training points, got {n}")
    dsub = d // m
    sub_centroids = np.empty((m, ksub, dsub), dtype=np.float32)
    distortion = 0.0
    for s in range(m):
        model = kmeans_fit(points[:, s * dsub : (s + 1) * dsub], ksub, seed=seed + s)
        sub_centroids[s] = model.centroids.astype(np.float32)
        distortion += model.distortion
    return PQCodebook(m=m, ksub=ksub, sub_centroids=sub_centroids, distortion=distortion)


def pq_encode_batch(codebook: PQCodebook, vectors: np.ndarray) -> np.ndarray:
    """Nearest sub-centroid per subspace; returns (n, m) uint8 codes."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != codebook.d:
        raise ValueError(f"vectors must be (n, {codebook.d}), got shape {vectors.shape}")
    n = vectors.shape[0]
    dsub = codebook.dsub
    codes = np.empty((n, codebook.m), dtype=np.uint8)
    for s in range(codebook.m):
        sub = vectors[:, s * dsub : (s + 1) * dsub]
        cents = codebook.sub_centroids[s].astype(np.float64)
        d2 = (
            np.einsum("ij,ij->i", sub, sub)[:, None]
            + np.einsum("ij,ij->i", cents, cents)[None, :]
            - 2.0 * (sub @ cents.T)
        )
        codes[:, s] = np.argmin(d2, axis=1).astype(np.uint8)
    return codes


def pq_encode(codebook: PQCodebook, vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (codebook.d,):
        raise ValueError(f"vector shape {vector.shape} != ({codebook.d},)")
    return pq_encode_batch(codebook, vector[None, :])[0]


def pq_decode(codebook: PQCodebook, code: np.ndarray) -> np.ndarray:
    """Concatenate the chosen sub-centroids back into a d-vector."""
    code = np.asarray(code)
    if code.shape != (codebook.m,):
        raise ValueError(f"code shape {code.shape} != ({codebook.m},)")
    parts = [codebook.sub_centroids[s, int(code[s])].astype(np.float64) for s in range(codebook.m)]
    return np.concatenate(parts)


def adc_tables(codebook: PQCodebook, query: np.ndarray) -> np.ndarray:
    """Per-subspace squared distances from the query to every sub-centroid.

    table[s, j] = ||query_s - sub_centroid[s, j]||^2, shape (m, ksub).
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (codebook.d,):
        raise ValueError(f"query shape {query.shape} != ({codebook.d},)")
    dsub = codebook.dsub
    sub = query.reshape(codebook.m, dsub)
    diff = codebook.sub_centroids.astype(np.float64) - sub[:, None, :]
    return np.einsum("mkd,mkd->mk", diff, diff)


def adc_distance(tables: np.ndarray, code: np.ndarray) -> float:
    """Asymmetric distance: sum of the table entries the code selects."""
    code = np.asarray(code)
    m = tables.shape[0]
    if code.shape != (m,):
        raise ValueError(f"code shape {code.shape} != ({m},)")
    return float(tables[np.arange(m), code.astype(np.intp)].sum())


def adc_distance_batch(tables: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Vectorized :func:`adc_distance` over (n, m) codes."""
    codes = np.asarray(codes)
    m = tables.shape[0]
    if codes.ndim != 2 or codes.shape[1] != m:
        raise ValueError(f"codes must be (n, {m}), got shape {codes.shape}")
    return tables[np.arange(m)[None, :], codes.astype(np.intp)].sum(axis=1)
