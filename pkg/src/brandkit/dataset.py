"""Annotation loading, validation, statistics, QC consensus, and splits.

Labels live in a three-level tree: every logo belongs to exactly one brand
and every brand to exactly one type.

File formats (UTF-8, line-delimited, whitespace-separated, ``#`` starts a
comment line):

* taxonomy file: one line per logo, ``logo_id brand_id type_id``. A brand
  appearing with two different types is an error.
* annotation file: one instance per line,
  ``image_id W H x y w h type_id brand_id logo_id``
  with (x, y, w, h) in pixels, top-left origin. A 3-field line
  ``image_id W H`` declares an image without any instance. Repeated
  image_ids accumulate into one record and must agree on W and H.

Coordinates are written with ``repr`` so a load/save/load round trip is
bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError
from .geometry import Box, pairwise_iou

LEVELS = ("type", "brand", "logo")


@dataclass(frozen=True)
class Taxonomy:
    logo_to_brand: dict[int, int]
    brand_to_type: dict[int, int]
    names: dict[str, dict[int, str]] | None = None

    def __post_init__(self):
        for logo, brand in self.logo_to_brand.items():
            if logo < 0 or brand < 0:
                raise ValueError(f"ids must be non-negative: logo {logo} -> brand {brand}")
            if brand not in self.brand_to_type:
                raise ValueError(f"logo {logo} maps to unknown brand {brand}")
        for brand, type_id in self.brand_to_type.items():
            if brand < 0 or type_id < 0:
                raise ValueError(f"ids must be non-negative: brand {brand} -> type {type_id}")
        if self.names is not None:
            unknown = set(self.names) - set(LEVELS)
            if unknown:
                raise ValueError(f"unknown taxonomy levels {sorted(unknown)}")

    @property
    def num_logos(self) -> int:
        return len(self.logo_to_brand)

    @property
    def num_brands(self) -> int:
        return len(self.brand_to_type)

    @property
    def num_types(self) -> int:
        return len(set(self.brand_to_type.values()))

    def brand_of(self, logo_id: int) -> int:
        try:
            return self.logo_to_brand[logo_id]
        except KeyError:
            raise KeyError(f"unknown logo id {logo_id}") from None

    def type_of(self, brand_id: int) -> int:
        try:
            return self.brand_to_type[brand_id]
        except KeyError:
            raise KeyError(f"unknown brand id {brand_id}") from None

    def resolve(self, logo_id: int) -> tuple[int, int, int]:
        """Full (logo, brand, type) chain for a logo id."""
        brand = self.brand_of(logo_id)
        return (logo_id, brand, self.type_of(brand))


@dataclass(frozen=True)
class InstanceAnnotation:
    box: tuple[float, float, float, float]  # (x, y, width, height), pixels
    type_id: int
    brand_id: int
    logo_id: int

    def __post_init__(self):
        x, y, w, h = self.box
        if w <= 0 or h <= 0:
            raise ValueError(f"box must have positive size, got w={w} h={h}")
        if min(self.type_id, self.brand_id, self.logo_id) < 0:
            raise ValueError("label ids must be non-negative")

    @property
    def area(self) -> float:
        return self.box[2] * self.box[3]

    def corner_box(self) -> Box:
        x, y, w, h = self.box
        return Box(x, y, x + w, y + h)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    annotations: tuple[InstanceAnnotation, ...] = ()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class DatasetStats:
    num_images: int
    num_instances: int
    mean_scale_percent: float
    mean_instances_per_category: float

    def as_dict(self) -> dict:
        return {
            "num_images": self.num_images,
            "num_instances": self.num_instances,
            "mean_scale_percent": self.mean_scale_percent,
            "mean_instances_per_category": self.mean_instances_per_category,
        }


@dataclass(frozen=True)
class LoadError:
    line_no: int
    message: str


@dataclass
class LoadResult:
    records: list[ImageRecord] = field(default_factory=list)
    errors: list[LoadError] = field(default_factory=list)


def check_consistent(ann: InstanceAnnotation, taxonomy: Taxonomy) -> None:
    """Raise ValueError if the label triple disagrees with the taxonomy."""
    if ann.logo_id not in taxonomy.logo_to_brand:
        raise ValueError(f"unknown logo id {ann.logo_id}")
    brand = taxonomy.logo_to_brand[ann.logo_id]
    if ann.brand_id != brand:
        raise ValueError(f"logo {ann.logo_id} belongs to brand {brand}, not {ann.brand_id}")
    type_id = taxonomy.brand_to_type[brand]
    if ann.type_id != type_id:
        raise ValueError(f"brand {brand} has type {type_id}, not {ann.type_id}")


def load_taxonomy(path) -> Taxonomy:
    logo_to_brand: dict[int, int] = {}
    brand_to_type: dict[int, int] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataFormatError(f"{path}:{line_no}: expected 3 fields, got {len(parts)}")
            try:
                logo, brand, type_id = (int(p) for p in parts)
            except ValueError:
                raise DataFormatError(f"{path}:{line_no}: non-integer id") from None
            if logo in logo_to_brand and logo_to_brand[logo] != brand:
                raise DataFormatError(f"{path}:{line_no}: logo {logo} has two parents")
            if brand in brand_to_type and brand_to_type[brand] != type_id:
                raise DataFormatError(f"{path}:{line_no}: brand {brand} has two types")
            logo_to_brand[logo] = brand
            brand_to_type[brand] = type_id
    try:
        return Taxonomy(logo_to_brand=logo_to_brand, brand_to_type=brand_to_type)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def save_taxonomy(taxonomy: Taxonomy, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for logo in sorted(taxonomy.logo_to_brand):
            brand = taxonomy.logo_to_brand[logo]
            f.write(f"{logo} {brand} {taxonomy.brand_to_type[brand]}\n")


def _parse_annotation_line(parts: list[str], taxonomy: Taxonomy):
    image_id = parts[0]
    width, height = int(parts[1]), int(parts[2])
    if width < 1 or height < 1:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    if len(parts) == 3:
        return image_id, width, height, None
    x, y, w, h = (float(p) for p in parts[3:7])
    type_id, brand_id, logo_id = (int(p) for p in parts[7:10])
    if w <= 0 or h <= 0:
        raise ValueError(f"box must have positive size, got w={w} h={h}")
    # clip to the image, then re-check the size
    x1, y1 = max(x, 0.0), max(y, 0.0)
    x2, y2 = min(x + w, float(width)), min(y + h, float(height))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise ValueError("box lies entirely outside the image")
    ann = InstanceAnnotation(
        box=(x1, y1, x2 - x1, y2 - y1),
        type_id=type_id,
        brand_id=brand_id,
        logo_id=logo_id,
    )
    check_consistent(ann, taxonomy)
    return image_id, width, height, ann


def load_annotations(path, taxonomy: Taxonomy) -> LoadResult:
    """Parse an annotation file; malformed lines become LoadErrors with
    their line number and the rest of the file still loads."""
    order: list[str] = []
    sizes: dict[str, tuple[int, int]] = {}
    per_image: dict[str, list[InstanceAnnotation]] = {}
    errors: list[LoadError] = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (3, 10):
                errors.append(LoadError(line_no, f"expected 3 or 10 fields, got {len(parts)}"))
                continue
            try:
                image_id, width, height, ann = _parse_annotation_line(parts, taxonomy)
            except ValueError as exc:
                errors.append(LoadError(line_no, str(exc)))
                continue
            if image_id in sizes and sizes[image_id] != (width, height):
                errors.append(
                    LoadError(line_no, f"image {image_id} size conflicts with earlier lines")
                )
                continue
            if image_id not in sizes:
                sizes[image_id] = (width, height)
                order.append(image_id)
                per_image[image_id] = []
            if ann is not None:
                per_image[image_id].append(ann)
    records = [
        ImageRecord(
            image_id=img, width=sizes[img][0], height=sizes[img][1],
            annotations=tuple(per_image[img]),
        )
        for img in order
    ]
    return LoadResult(records=records, errors=errors)


def save_annotations(records, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            if not rec.annotations:
                f.write(f"{rec.image_id} {rec.width} {rec.height}\n")
            for ann in rec.annotations:
                x, y, w, h = ann.box
                f.write(
                    f"{rec.image_id} {rec.width} {rec.height} "
                    f"{x!r} {y!r} {w!r} {h!r} "
                    f"{ann.type_id} {ann.brand_id} {ann.logo_id}\n"
                )


def dataset_stats(records) -> DatasetStats:
    """Counts plus mean instance-area ratio (percent) and mean instances
    per distinct logo category."""
    records = list(records)
    if not records:
        raise ValueError("records must be non-empty")
    num_instances = 0
    scale_sum = 0.0
    logos: set[int] = set()
    for rec in records:
        image_area = float(rec.width * rec.height)
        for ann in rec.annotations:
            num_instances += 1
            scale_sum += ann.area / image_area
            logos.add(ann.logo_id)
    mean_scale = 100.0 * scale_sum / num_instances if num_instances else 0.0
    mean_per_cat = num_instances / len(logos) if logos else 0.0
    return DatasetStats(
        num_images=len(records),
        num_instances=num_instances,
        mean_scale_percent=mean_scale,
        mean_instances_per_category=mean_per_cat,
    )


def format_stats_report(stats: DatasetStats) -> str:
    lines = [f"{key}={value}" for key, value in stats.as_dict().items()]
    return "\n".join(lines) + "\n"


def _greedy_match_scores(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Per-box best-IoU matches of A against B, greedy one-to-one on
    descending IoU. Unmatched boxes score 0."""
    scores = np.zeros(len(boxes_a))
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return scores
    ious = pairwise_iou(boxes_a, boxes_b)
    pairs = [(ious[i, j], i, j) for i in range(len(boxes_a)) for j in range(len(boxes_b))]
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_a: set[int] = set()
    used_b: set[int] = set()
    for value, i, j in pairs:
        if value <= 0.0:
            break
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        scores[i] = value
    return scores


def qc_consensus(candidates) -> tuple[int, float]:
    """Pick the annotator whose boxes agree best with the other two.

    Each candidate's score is the mean, over its boxes, of its matched IoU
    against each other annotator (greedy one-to-one matching on descending
    IoU), averaged across the other annotators. Ties go to the lowest
    index. An empty candidate scores 0; all three empty is an error.
    """
    candidates = [list(c) for c in candidates]
    if len(candidates) != 3:
        raise ValueError(f"expected exactly 3 annotators, got {len(candidates)}")
    if all(len(c) == 0 for c in candidates):
        raise ValueError("all three annotators are empty")
    corner_arrays = []
    for anns in candidates:
        corners = np.array(
            [(a.box[0], a.box[1], a.box[0] + a.box[2], a.box[1] + a.box[3]) for a in anns],
            dtype=np.float64,
        ).reshape(-1, 4)
        corner_arrays.append(corners)
    scores = []
    for i in range(3):
        if len(candidates[i]) == 0:
            scores.append(0.0)
            continue
        cross = []
        for j in range(3):
            if j == i:
                continue
            cross.append(_greedy_match_scores(corner_arrays[i], corner_arrays[j]).mean())
        scores.append(float(np.mean(cross)))
    best = int(np.argmax(scores))  # argmax takes the first max: lowest index wins ties
    return best, scores[best]


def balanced_test_split(records, per_category: int, seed: int = 0) -> list[ImageRecord]:
    """Up to ``per_category`` images per logo id, sampled deterministically.

    Categories with fewer images contribute all of them. Images holding
    several categories may be drawn through any of them; duplicates are
    removed. Output preserves the input record order.
    """
    if per_category < 1:
        raise ValueError(f"per_category must be >= 1, got {per_category}")
    records = list(records)
    by_logo: dict[int, list[int]] = {}
    for idx, rec in enumerate(records):
        for logo in sorted({a.logo_id for a in rec.annotations}):
            by_logo.setdefault(logo, []).append(idx)
    rng = np.random.default_rng(seed)
    chosen: set[int] = set()
    for logo in sorted(by_logo):
        members = by_logo[logo]
        perm = rng.permutation(len(members))
        for p in perm[:per_category]:
            chosen.add(members[p])
    return [records[i] for i in sorted(chosen)]
