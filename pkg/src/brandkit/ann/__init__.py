"""Instance-retrieval backend: k-means, product quantization, inverted-file search."""

from .kmeans import KMeansModel, kmeans_assign, kmeans_fit
from .pq import (
    PQCodebook,
    adc_distance,
    adc_distance_batch,
    adc_tables,
    pq_decode,
    pq_encode,
    pq_encode_batch,
    pq_train,
)
from .ivf import (
    INDEX_MAGIC,
    INDEX_VERSION,
    IVFPQIndex,
    SearchResult,
    deserialize_index,
    exhaustive_search,
    ivf_add,
    ivf_build,
    ivf_search,
    serialize_index,
)

__all__ = [
    "KMeansModel",
    "kmeans_assign",
    "kmeans_fit",
    "PQCodebook",
    "adc_distance",
    "adc_distance_batch",
    "adc_tables",
    "pq_decode",
    "pq_encode",
    "pq_encode_batch",
    "pq_train",
    "INDEX_MAGIC",
    "INDEX_VERSION",
    "IVFPQIndex",
    "SearchResult",
    "deserialize_index",
    "exhaustive_search",
    "ivf_add",
    "ivf_build",
    "ivf_search",
    "serialize_index",
]
