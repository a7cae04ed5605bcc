"""End-to-end glue: ingest, QC, gallery embedding, index build/add,
search with label voting, and evaluation.

The configuration is a flat key=value text file; every key can be
overridden by a CLI flag of the same name. Gallery vectors get sequential
ids in annotation order; a sidecar labels file next to the index maps each
id to its (logo, brand, type) triple, since the index file itself stores
only ids and codes.

Results files are line-delimited:
``image_id x y w h type_id brand_id logo_id confidence``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import synth
from .ann import (
    IVFPQIndex,
    SearchResult,
    deserialize_index,
    ivf_add,
    ivf_build,
    ivf_search,
    serialize_index,
)
from .dataset import (
    DatasetStats,
    ImageRecord,
    LoadResult,
    Taxonomy,
    dataset_stats,
    load_annotations,
    load_taxonomy,
    qc_consensus,
)
from .embedder import embed_roi, extract_patch
from .errors import DataFormatError
from .evaluation import (
    DEFAULT_CONFIDENCE,
    Detection,
    EvalReport,
    IOU_GRID,
    evaluate,
    ground_truths_from_records,
)
from .geometry import Box
from .images import read_image


@dataclass
class PipelineConfig:
    annotations: str = ""
    images_dir: str = ""
    taxonomy: str = ""
    index: str = "index.obix"
    labels: str = ""  # defaults to <index>.labels
    results: str = ""
    report: str = ""
    out_dir: str = ""
    nlist: int = 256  # index defaults are desk-scale choices, not paper values
    nprobe: int = 8
    m: int = 16
    ksub: int = 256
    seed: int = 0
    patch_size: int = 64
    grid_cells: int = 16
    orient_bins: int = 16
    confidence_threshold: float = DEFAULT_CONFIDENCE
    negative_threshold: float = 0.99
    topk: int = 5
    num_brands: int = 50
    instances_per_brand: int = 40
    image_size: int = 128
    mean_scale_percent: float = 1.2
    num_empty_images: int = 0
    allow_partial: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.nlist < 1:
            raise ValueError("nlist must be >= 1")
        if not 1 <= self.nprobe <= self.nlist:
            raise ValueError(f"nprobe must be in [1, nlist={self.nlist}]")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 1 <= self.ksub <= 256:
            raise ValueError("ksub must be in [1, 256]")
        if self.patch_size < 2 or self.patch_size % self.grid_cells != 0:
            raise ValueError("patch_size must be a positive multiple of grid_cells")
        if self.grid_cells < 1 or self.orient_bins < 1:
            raise ValueError("grid_cells and orient_bins must be >= 1")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0,1]")
        if not 0.0 < self.negative_threshold < 1.0:
            raise ValueError("negative_threshold must be in (0,1)")
        if self.topk < 1:
            raise ValueError("topk must be >= 1")

    @property
    def embed_dims(self) -> int:
        return self.grid_cells * self.grid_cells * self.orient_bins

    @property
    def labels_path(self) -> str:
        return self.labels or self.index + ".labels"

    @classmethod
    def from_sources(cls, file_values: dict | None = None,
                     overrides: dict | None = None) -> "PipelineConfig":
        values: dict = {}
        for source in (file_values or {}), (overrides or {}):
            values.update({k: v for k, v in source.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise DataFormatError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**values)


def load_config_file(path) -> dict:
    """Flat key=value lines with the types of the matching config fields."""
    types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    casts = {"int": int, "float": float, "str": str, "bool": lambda s: s.lower() in ("1", "true", "yes")}
    values: dict = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{line_no}: expected key=value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in types:
                raise DataFormatError(f"{path}:{line_no}: unknown key {key!r}")
            try:
                values[key] = casts[types[key]](raw)
            except ValueError:
                raise DataFormatError(f"{path}:{line_no}: bad value {raw!r} for {key}") from None
    return values


@dataclass(frozen=True)
class RecognitionResult:
    query_id: str
    neighbors: SearchResult
    logo_id: int
    brand_id: int
    type_id: int
    truncated: bool = False


def _require_file(path, what: str) -> None:
    if not path:
        raise DataFormatError(f"no {what} path configured")
    if not os.path.exists(path):
        raise DataFormatError(f"{what} file not found: {path}")


def load_dataset(config: PipelineConfig) -> tuple[Taxonomy, LoadResult]:
    _require_file(config.taxonomy, "taxonomy")
    _require_file(config.annotations, "annotations")
    taxonomy = load_taxonomy(config.taxonomy)
    result = load_annotations(config.annotations, taxonomy)
    return taxonomy, result


def cmd_ingest(config: PipelineConfig) -> tuple[DatasetStats, LoadResult]:
    taxonomy, result = load_dataset(config)
    if result.errors and not config.allow_partial:
        listing = "; ".join(f"line {e.line_no}: {e.message}" for e in result.errors[:10])
        raise DataFormatError(
            f"{len(result.errors)} rejected record(s) in {config.annotations}: {listing}"
        )
    stats = dataset_stats(result.records)
    if config.report:
        with open(config.report, "w", encoding="utf-8") as f:
            json.dump(stats.as_dict(), f, indent=2)
            f.write("\n")
    return stats, result


def embed_records(records, images_dir: str, config: PipelineConfig):
    """Embed every annotated instance crop; returns (vectors, labels).

    Ids are implicit: row i of the returned matrix is vector id ``start+i``
    when indexed. Labels align row-for-row as (logo, brand, type) triples.
    """
    vectors: list[np.ndarray] = []
    labels: list[tuple[int, int, int]] = []
    for rec in records:
        if not rec.annotations:
            continue
        image = read_image(os.path.join(images_dir, rec.image_id + ".pgm"))
        for ann in rec.annotations:
            patch = extract_patch(image, ann.corner_box(), size=config.patch_size)
            emb = embed_roi(patch, grid_cells=config.grid_cells,
                            orient_bins=config.orient_bins)
            vectors.append(emb.values)
            labels.append((ann.logo_id, ann.brand_id, ann.type_id))
    if vectors:
        return np.stack(vectors), labels
    return np.empty((0, config.embed_dims)), labels


def save_labels(labels: dict[int, tuple[int, int, int]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for vec_id in sorted(labels):
            logo, brand, type_id = labels[vec_id]
            f.write(f"{vec_id} {logo} {brand} {type_id}\n")


def load_labels(path) -> dict[int, tuple[int, int, int]]:
    labels: dict[int, tuple[int, int, int]] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{line_no}: expected 4 fields")
            vec_id, logo, brand, type_id = (int(p) for p in parts)
            if vec_id in labels:
                raise DataFormatError(f"{path}:{line_no}: duplicate id {vec_id}")
            labels[vec_id] = (logo, brand, type_id)
    return labels


def cmd_build_index(config: PipelineConfig) -> dict:
    taxonomy, result = load_dataset(config)
    if result.errors and not config.allow_partial:
        raise DataFormatError(
            f"{len(result.errors)} rejected record(s); rerun ingest for details"
        )
    vectors, triples = embed_records(result.records, config.images_dir, config)
    n = len(vectors)
    needed = max(config.nlist, config.ksub)
    if n < needed:
        raise DataFormatError(
            f"gallery holds {n} vectors but nlist={config.nlist}, ksub={config.ksub} "
            f"require at least {needed}"
        )
    index = ivf_build(vectors, config.nlist, config.m, config.ksub, seed=config.seed)
    serialize_index(index, config.index)
    save_labels({i: t for i, t in enumerate(triples)}, config.labels_path)
    return {
        "count": index.count,
        "distortion": index.codebook.distortion,
        "index": config.index,
        "labels": config.labels_path,
        "train_count": index.train_count,
    }


def cmd_add(config: PipelineConfig) -> dict:
    """Extend an existing index with new exemplars; no retraining happens."""
    _require_file(config.index, "index")
    _require_file(config.labels_path, "labels")
    taxonomy, result = load_dataset(config)
    if result.errors and not config.allow_partial:
        raise DataFormatError(f"{len(result.errors)} rejected record(s) in new exemplars")
    index = deserialize_index(config.index)
    labels = load_labels(config.labels_path)
    vectors, triples = embed_records(result.records, config.images_dir, config)
    if len(vectors) == 0:
        raise DataFormatError("no annotated instances to add")
    if vectors.shape[1] != index.d:
        raise DataFormatError(
            f"embedding dim {vectors.shape[1]} != index dim {index.d}"
        )
    next_id = max(labels) + 1 if labels else 0
    train_count_before = index.train_count
    for offset, (vec, triple) in enumerate(zip(vectors, triples)):
        ivf_add(index, next_id + offset, vec)
        labels[next_id + offset] = triple
    serialize_index(index, config.index)
    save_labels(labels, config.labels_path)
    return {
        "added": len(vectors),
        "count": index.count,
        "train_count_before": train_count_before,
        "train_count_after": index.train_count,
    }


def vote_label(
    neighbors: SearchResult, labels: dict[int, tuple[int, int, int]]
) -> tuple[int, int, int]:
    """Majority vote over the neighbors' logo ids; a tie falls back to the
    nearest neighbor's label."""
    if len(neighbors) == 0:
        raise ValueError("cannot vote with zero neighbors")
    triples = []
    for vec_id, _ in neighbors:
        if vec_id not in labels:
            raise DataFormatError(f"vector id {vec_id} missing from labels file")
        triples.append(labels[vec_id])
    counts: dict[int, int] = {}
    for logo, _, _ in triples:
        counts[logo] = counts.get(logo, 0) + 1
    best = max(counts.values())
    winners = [logo for logo, c in counts.items() if c == best]
    if len(winners) == 1:
        winner = winners[0]
        for triple in triples:
            if triple[0] == winner:
                return triple
    return triples[0]


def search_index(
    index: IVFPQIndex,
    labels: dict[int, tuple[int, int, int]],
    image: np.ndarray,
    box: Box,
    config: PipelineConfig,
    query_id: str = "query",
) -> RecognitionResult:
    if index.count == 0:
        raise DataFormatError("index is empty; build or add vectors first")
    patch = extract_patch(image, box, size=config.patch_size)
    emb = embed_roi(patch, grid_cells=config.grid_cells, orient_bins=config.orient_bins)
    truncated = config.topk > index.count
    neighbors = ivf_search(index, emb.values, k=config.topk, nprobe=config.nprobe)
    logo, brand, type_id = vote_label(neighbors, labels)
    return RecognitionResult(
        query_id=query_id,
        neighbors=neighbors,
        logo_id=logo,
        brand_id=brand,
        type_id=type_id,
        truncated=truncated,
    )


def cmd_search(config: PipelineConfig, image_path, box: Box) -> RecognitionResult:
    _require_file(config.index, "index")
    _require_file(config.labels_path, "labels")
    _require_file(image_path, "query image")
    index = deserialize_index(config.index)
    labels = load_labels(config.labels_path)
    image = read_image(image_path)
    return search_index(index, labels, image, box, config,
                        query_id=os.path.basename(str(image_path)))


def parse_results(path, taxonomy: Taxonomy | None = None) -> list[Detection]:
    """Read a detection results file (strict: any malformed line is an error)."""
    detections: list[Detection] = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 9:
                raise DataFormatError(f"{path}:{line_no}: expected 9 fields, got {len(parts)}")
            try:
                image_id = parts[0]
                x, y, w, h = (float(p) for p in parts[1:5])
                type_id, brand_id, logo_id = (int(p) for p in parts[5:8])
                confidence = float(parts[8])
            except ValueError:
                raise DataFormatError(f"{path}:{line_no}: malformed field") from None
            if w <= 0 or h <= 0:
                raise DataFormatError(f"{path}:{line_no}: non-positive box size")
            if not 0.0 <= confidence <= 1.0:
                raise DataFormatError(f"{path}:{line_no}: confidence {confidence} not in [0,1]")
            if taxonomy is not None:
                if taxonomy.logo_to_brand.get(logo_id) != brand_id or \
                        taxonomy.brand_to_type.get(brand_id) != type_id:
                    raise DataFormatError(
                        f"{path}:{line_no}: label triple inconsistent with taxonomy"
                    )
            detections.append(
                Detection(image_id=image_id, box=Box(x, y, x + w, y + h),
                          label=logo_id, confidence=confidence)
            )
    return detections


def write_results(rows, path) -> None:
    """Rows are (image_id, Box, (logo, brand, type), confidence)."""
    with open(path, "w", encoding="utf-8") as f:
        for image_id, box, (logo, brand, type_id), confidence in rows:
            x, y, w, h = box.to_xywh()
            f.write(f"{image_id} {x!r} {y!r} {w!r} {h!r} {type_id} {brand} {logo} {confidence!r}\n")


def cmd_eval(config: PipelineConfig) -> EvalReport:
    taxonomy, result = load_dataset(config)
    _require_file(config.results, "results")
    detections = parse_results(config.results, taxonomy)
    gts = ground_truths_from_records(result.records)
    report = evaluate(
        detections, gts,
        confidence_threshold=config.confidence_threshold,
        iou_thresholds=IOU_GRID,
        taxonomy=taxonomy,
    )
    if config.report:
        with open(config.report, "w", encoding="utf-8") as f:
            json.dump(report.as_dict(), f, indent=2)
            f.write("\n")
    return report


def cmd_qc(config: PipelineConfig, paths) -> dict[str, tuple[int, float]]:
    """Consensus pick per image across three annotator files."""
    if len(paths) != 3:
        raise DataFormatError(f"qc needs exactly 3 annotation files, got {len(paths)}")
    _require_file(config.taxonomy, "taxonomy")
    taxonomy = load_taxonomy(config.taxonomy)
    loaded = []
    for path in paths:
        _require_file(path, "annotations")
        result = load_annotations(path, taxonomy)
        if result.errors and not config.allow_partial:
            raise DataFormatError(f"{path}: {len(result.errors)} rejected record(s)")
        loaded.append({rec.image_id: rec for rec in result.records})
    image_ids = sorted(set().union(*[set(d) for d in loaded]))
    out: dict[str, tuple[int, float]] = {}
    for image_id in image_ids:
        candidates = [
            list(d[image_id].annotations) if image_id in d else [] for d in loaded
        ]
        out[image_id] = qc_consensus(candidates)
    return out


def cmd_synth(config: PipelineConfig) -> synth.SynthSummary:
    if not config.out_dir:
        raise DataFormatError("out_dir must be set for synth")
    return synth.generate_synthetic_dataset(
        config.out_dir,
        seed=config.seed,
        num_brands=config.num_brands,
        instances_per_brand=config.instances_per_brand,
        image_size=config.image_size,
        mean_scale_percent=config.mean_scale_percent,
        num_empty_images=config.num_empty_images,
    )
