"""Inverted-file index with PQ-compressed residuals (IVFADC layout).

A coarse k-means quantizer partitions vectors into nlist inverted lists;
each vector is stored as its id plus the PQ code of its residual against
the owning coarse centroid. Search probes the nprobe nearest lists and
ranks candidates by asymmetric distance on residuals, ties broken by lower
id. Adding vectors never retrains the quantizers, so new categories extend
the index in O(1) codebook work.

On-disk format (little-endian), in order:

    magic   "OBIX"
    version u32
    d, m, ksub, nlist, count          u32 each
    coarse centroids                  nlist * d float32, row-major
    sub-centroids                     m * ksub * (d/m) float32, row-major
    per list: length u32, ids u64[length], codes length*m bytes
    CRC32 of everything above         u32
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import IndexFormatError
from .kmeans import KMeansModel, kmeans_fit
from .pq import (
    PQCodebook,
    adc_distance_batch,
    adc_tables,
    pq_encode_batch,
    pq_train,
)

INDEX_MAGIC = b"OBIX"
INDEX_VERSION = 1

_EMPTY_IDS = np.empty(0, dtype=np.uint64)


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Ranked neighbors: parallel id/distance arrays, distances non-decreasing."""

    ids: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if self.ids.shape != self.distances.shape:
            raise ValueError("ids and distances must have equal length")
        if len(self.distances) > 1 and np.any(np.diff(self.distances) < 0):
            raise ValueError("distances must be non-decreasing")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(zip(self.ids.tolist(), self.distances.tolist()))


def _empty_result() -> SearchResult:
    return SearchResult(ids=_EMPTY_IDS.copy(), distances=np.empty(0, dtype=np.float64))


def _coarse_sq_distances(query: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = centroids.astype(np.float64) - query[None, :]
    return np.einsum("ij,ij->i", diff, diff)


@dataclass
class IVFPQIndex:
    coarse: KMeansModel  # float32 centroids, one per inverted list
    codebook: PQCodebook  # trained on residuals
    list_ids: list[np.ndarray] = field(default_factory=list)  # uint64 per list
    list_codes: list[np.ndarray] = field(default_factory=list)  # (n_i, m) uint8 per list
    # number of quantizer trainings performed by this in-memory instance;
    # ivf_add must never bump it
    train_count: int = 0

    def __post_init__(self):
        if len(self.list_ids) != self.coarse.k or len(self.list_codes) != self.coarse.k:
            raise ValueError("need one inverted list per coarse centroid")
        if self.coarse.d != self.codebook.d:
            raise ValueError(
                f"coarse dimension {self.coarse.d} != codebook dimension {self.codebook.d}"
            )
        all_ids = np.concatenate(self.list_ids) if self.count else _EMPTY_IDS
        if len(np.unique(all_ids)) != len(all_ids):
            raise ValueError("duplicate vector ids across inverted lists")
        self._ids = set(int(i) for i in all_ids)

    @property
    def d(self) -> int:
        return self.coarse.d

    @property
    def nlist(self) -> int:
        return self.coarse.k

    @property
    def count(self) -> int:
        return sum(len(ids) for ids in self.list_ids)

    def __eq__(self, other) -> bool:
        # structural equality over the fields the file format covers
        if not isinstance(other, IVFPQIndex):
            return NotImplemented
        return (
            self.nlist == other.nlist
            and self.codebook == other.codebook
            and np.array_equal(self.coarse.centroids, other.coarse.centroids)
            and all(np.array_equal(a, b) for a, b in zip(self.list_ids, other.list_ids))
            and all(np.array_equal(a, b) for a, b in zip(self.list_codes, other.list_codes))
        )


def ivf_build(
    vectors: np.ndarray,
    nlist: int,
    m: int,
    ksub: int,
    seed: int = 0,
    ids=None,
    train_only: bool = False,
) -> IVFPQIndex:
    """Train the coarse quantizer and residual codebook, then index ``vectors``.

    Ids default to 0..n-1. ``train_only`` fits the quantizers but leaves the
    lists empty (useful for building an index that is populated solely via
    :func:`ivf_add`).
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError(f"vectors must be (n, d), got shape {vectors.shape}")
    n, d = vectors.shape
    if n < max(nlist, ksub):
        raise ValueError(f"need at least max(nlist, ksub)={max(nlist, ksub)} vectors, got {n}")

    model = kmeans_fit(vectors, nlist, seed=seed)
    # freeze centroids at on-disk precision so assignments made now and
    # after a save/load round trip agree
    coarse = KMeansModel(
        centroids=model.centroids.astype(np.float32),
        distortion=model.distortion,
        distortion_history=model.distortion_history,
    )
    centroids64 = coarse.centroids.astype(np.float64)
    d2 = (
        np.einsum("ij,ij->i", vectors, vectors)[:, None]
        + np.einsum("ij,ij->i", centroids64, centroids64)[None, :]
        - 2.0 * (vectors @ centroids64.T)
    )
    labels = np.argmin(d2, axis=1)
    residuals = vectors - centroids64[labels]
    codebook = pq_train(residuals, m, ksub, seed=seed + 1)

    list_ids: list[np.ndarray] = [_EMPTY_IDS.copy() for _ in range(nlist)]
    list_codes: list[np.ndarray] = [np.empty((0, m), dtype=np.uint8) for _ in range(nlist)]
    if not train_only:
        if ids is None:
            ids = np.arange(n, dtype=np.uint64)
        else:
            ids = np.asarray(ids, dtype=np.uint64)
            if ids.shape != (n,):
                raise ValueError(f"ids shape {ids.shape} != ({n},)")
        codes = pq_encode_batch(codebook, residuals)
        for lst in range(nlist):
            members = np.nonzero(labels == lst)[0]
            list_ids[lst] = ids[members].copy()
            list_codes[lst] = codes[members].copy()
    return IVFPQIndex(
        coarse=coarse,
        codebook=codebook,
        list_ids=list_ids,
        list_codes=list_codes,
        train_count=1,
    )


def ivf_add(index: IVFPQIndex, vector_id: int, vector: np.ndarray) -> None:
    """Append one vector without touching the trained quantizers."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (index.d,):
        raise ValueError(f"vector shape {vector.shape} != ({index.d},)")
    vector_id = int(vector_id)
    if vector_id < 0:
        raise ValueError(f"ids must be non-negative, got {vector_id}")
    if vector_id in index._ids:
        raise ValueError(f"id {vector_id} already present in index")
    lst = int(np.argmin(_coarse_sq_distances(vector, index.coarse.centroids)))
    residual = vector - index.coarse.centroids[lst].astype(np.float64)
    code = pq_encode_batch(index.codebook, residual[None, :])
    index.list_ids[lst] = np.concatenate(
        [index.list_ids[lst], np.asarray([vector_id], dtype=np.uint64)]
    )
    index.list_codes[lst] = np.concatenate([index.list_codes[lst], code])
    index._ids.add(vector_id)


def ivf_search(index: IVFPQIndex, query: np.ndarray, k: int, nprobe: int) -> SearchResult:
    """ADC scan of the nprobe nearest inverted lists; smallest k distances win."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.d,):
        raise ValueError(f"query shape {query.shape} != ({index.d},)")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 1 <= nprobe <= index.nlist:
        raise ValueError(f"nprobe must be in [1, {index.nlist}], got {nprobe}")
    if index.count == 0:
        return _empty_result()

    coarse_d2 = _coarse_sq_distances(query, index.coarse.centroids)
    probe = np.lexsort((np.arange(index.nlist), coarse_d2))[:nprobe]

    chunks_ids = []
    chunks_dists = []
    for lst in probe:
        ids = index.list_ids[lst]
        if len(ids) == 0:
            continue
        residual = query - index.coarse.centroids[lst].astype(np.float64)
        tables = adc_tables(index.codebook, residual)
        chunks_ids.append(ids)
        chunks_dists.append(adc_distance_batch(tables, index.list_codes[lst]))
    if not chunks_ids:
        return _empty_result()
    all_ids = np.concatenate(chunks_ids)
    all_dists = np.concatenate(chunks_dists)
    order = np.lexsort((all_ids, all_dists))[:k]
    return SearchResult(ids=all_ids[order].copy(), distances=all_dists[order].copy())


def exhaustive_search(vectors: np.ndarray, query: np.ndarray, k: int, ids=None) -> SearchResult:
    """Exact squared-distance top-k: the ground truth approximate searches
    are measured against."""
    vectors = np.asarray(vectors, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError(f"vectors must be (n, d), got shape {vectors.shape}")
    if query.shape != (vectors.shape[1],):
        raise ValueError(f"query shape {query.shape} != ({vectors.shape[1]},)")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = vectors.shape[0]
    if n == 0:
        return _empty_result()
    if ids is None:
        ids = np.arange(n, dtype=np.uint64)
    else:
        ids = np.asarray(ids, dtype=np.uint64)
    diff = vectors - query[None, :]
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((ids, d2))[:k]
    return SearchResult(ids=ids[order].copy(), distances=d2[order].copy())


def serialize_index(index: IVFPQIndex, path) -> None:
    """Write the on-disk format documented in the module docstring."""
    buf = bytearray()
    buf += INDEX_MAGIC
    buf += struct.pack(
        "<6I", INDEX_VERSION, index.d, index.codebook.m, index.codebook.ksub,
        index.nlist, index.count,
    )
    buf += np.ascontiguousarray(index.coarse.centroids, dtype="<f4").tobytes()
    buf += np.ascontiguousarray(index.codebook.sub_centroids, dtype="<f4").tobytes()
    for ids, codes in zip(index.list_ids, index.list_codes):
        buf += struct.pack("<I", len(ids))
        buf += np.ascontiguousarray(ids, dtype="<u8").tobytes()
        buf += codes.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(buf))


def deserialize_index(path) -> IVFPQIndex:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 + 24 + 4:
        raise IndexFormatError(f"{path}: file too short for an index")
    if data[:4] != INDEX_MAGIC:
        raise IndexFormatError(f"{path}: bad magic {data[:4]!r}, expected {INDEX_MAGIC!r}")
    stored_crc = struct.unpack_from("<I", data, len(data) - 4)[0]
    actual_crc = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise IndexFormatError(
            f"{path}: checksum mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})"
        )
    version, d, m, ksub, nlist, count = struct.unpack_from("<6I", data, 4)
    if version != INDEX_VERSION:
        raise IndexFormatError(f"{path}: unsupported version {version}")
    if m == 0 or d % m != 0:
        raise IndexFormatError(f"{path}: dimension {d} not divisible by m={m}")
    dsub = d // m
    pos = 4 + 24

    def take(nbytes: int) -> bytes:
        nonlocal pos
        if pos + nbytes > len(data) - 4:
            raise IndexFormatError(f"{path}: truncated file")
        chunk = data[pos : pos + nbytes]
        pos += nbytes
        return chunk

    centroids = np.frombuffer(take(nlist * d * 4), dtype="<f4").reshape(nlist, d).copy()
    subs = np.frombuffer(take(m * ksub * dsub * 4), dtype="<f4").reshape(m, ksub, dsub).copy()
    list_ids: list[np.ndarray] = []
    list_codes: list[np.ndarray] = []
    for _ in range(nlist):
        (length,) = struct.unpack("<I", take(4))
        list_ids.append(np.frombuffer(take(length * 8), dtype="<u8").copy())
        list_codes.append(
            np.frombuffer(take(length * m), dtype=np.uint8).reshape(length, m).copy()
        )
    if pos != len(data) - 4:
        raise IndexFormatError(f"{path}: {len(data) - 4 - pos} unexpected trailing bytes")
    index = IVFPQIndex(
        # the file format does not carry training distortion
        coarse=KMeansModel(centroids=centroids, distortion=0.0),
        codebook=PQCodebook(m=m, ksub=ksub, sub_centroids=subs),
        list_ids=list_ids,
        list_codes=list_codes,
        train_count=0,
    )
    if index.count != count:
        raise IndexFormatError(
            f"{path}: header count {count} != {index.count} vectors in lists"
        )
    return index
