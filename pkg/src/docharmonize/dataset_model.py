"""Corpus data model and COCO-style annotation ingestion/emission.

Coordinates are stored as 64-bit floats with origin top-left; COCO
``[x, y, w, h]`` boxes are converted to corner form on load. Category
identity is by name string; numeric ids exist only inside COCO files.
"""

import json
from dataclasses import dataclass, field

from .errors import ParseError, StructuralError
from .taxonomy import Taxonomy


@dataclass(frozen=True)
class BBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for v in (self.x0, self.y0, self.x1, self.y1):
            if not (v == v and abs(v) != float("inf")):
                raise ValueError("bbox coordinates must be finite")
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"inverted bbox: {self}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def clamped(self, page_width, page_height):
        return BBox(
            min(max(self.x0, 0.0), page_width),
            min(max(self.y0, 0.0), page_height),
            min(max(self.x1, 0.0), page_width),
            min(max(self.y1, 0.0), page_height),
        )

    def union(self, other):
        return BBox(
            min(self.x0, other.x0),
            min(self.y0, other.y0),
            max(self.x1, other.x1),
            max(self.y1, other.y1),
        )

    def intersects(self, other):
        """Positive-area overlap test (edge contact does not count)."""
        return (
            self.x0 < other.x1
            and other.x0 < self.x1
            and self.y0 < other.y1
            and other.y0 < self.y1
        )

    def as_xywh(self):
        return [self.x0, self.y0, self.width, self.height]

    @classmethod
    def from_xywh(cls, x, y, w, h):
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))


@dataclass
class Annotation:
    id: int
    bbox: BBox
    category: str


@dataclass
class PageRecord:
    image_id: int
    width: float
    height: float
    image_path: str = None
    annotations: list = field(default_factory=list)

    @property
    def annotation_count(self):
        return len(self.annotations)


@dataclass
class LayoutDataset:
    name: str
    taxonomy: Taxonomy
    pages: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def page_count(self):
        return len(self.pages)

    @property
    def annotation_count(self):
        return sum(len(p.annotations) for p in self.pages)


@dataclass
class LoadReport:
    """Ingestion diagnostics: nothing here is fatal."""

    dropped_zero_area: int = 0
    clamped_out_of_page: int = 0
    clamped_ids: list = field(default_factory=list)
    dropped_ids: list = field(default_factory=list)

    def to_json(self):
        return {
            "dropped_zero_area": self.dropped_zero_area,
            "clamped_out_of_page": self.clamped_out_of_page,
            "clamped_ids": list(self.clamped_ids),
            "dropped_ids": list(self.dropped_ids),
        }


_COCO_IMAGE_KEYS = {"id", "file_name", "width", "height"}
_COCO_ANN_KEYS = {"id", "image_id", "category_id", "bbox"}


def load_coco(path, dataset_name):
    """Load a COCO-style annotation file.

    Returns (LayoutDataset, LoadReport). Zero/negative-area annotations are
    dropped and counted; boxes poking outside the page are clamped and
    flagged. Broken cross-references raise StructuralError.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON at byte offset {exc.pos}: {exc.msg}",
                         offset=exc.pos) from exc

    for key in ("images", "annotations", "categories"):
        if key not in data or not isinstance(data[key], list):
            raise StructuralError(f"{path}: missing or non-array top-level key {key!r}")

    categories = {}
    for cat in data["categories"]:
        categories[cat["id"]] = cat["name"]
    taxonomy = Taxonomy(tuple(dict.fromkeys(categories.values())))

    pages = {}
    page_order = []
    for img in data["images"]:
        page = PageRecord(
            image_id=img["id"],
            width=float(img["width"]),
            height=float(img["height"]),
            image_path=img.get("file_name"),
        )
        if img["id"] in pages:
            raise StructuralError(f"{path}: duplicate image id {img['id']}",
                                  offending_ids=[img["id"]])
        pages[img["id"]] = page
        page_order.append(page)

    report = LoadReport()
    bad_image_refs = []
    bad_category_refs = []
    for ann in data["annotations"]:
        ann_id = ann.get("id")
        image_id = ann.get("image_id")
        if image_id not in pages:
            bad_image_refs.append(ann_id)
            continue
        if ann.get("category_id") not in categories:
            bad_category_refs.append(ann_id)
            continue
        x, y, w, h = ann["bbox"]
        if w <= 0 or h <= 0:
            report.dropped_zero_area += 1
            report.dropped_ids.append(ann_id)
            continue
        page = pages[image_id]
        bbox = BBox.from_xywh(x, y, w, h)
        clamped = bbox.clamped(page.width, page.height)
        if clamped != bbox:
            report.clamped_out_of_page += 1
            report.clamped_ids.append(ann_id)
            bbox = clamped
            if bbox.area <= 0:
                report.dropped_zero_area += 1
                report.dropped_ids.append(ann_id)
                continue
        page.annotations.append(
            Annotation(id=ann_id, bbox=bbox, category=categories[ann["category_id"]])
        )
    if bad_image_refs:
        raise StructuralError(
            f"{path}: annotations reference unknown images: {bad_image_refs}",
            offending_ids=bad_image_refs,
        )
    if bad_category_refs:
        raise StructuralError(
            f"{path}: annotations reference unknown categories: {bad_category_refs}",
            offending_ids=bad_category_refs,
        )

    extra = {k: v for k, v in data.items() if k not in ("images", "annotations", "categories")}
    dataset = LayoutDataset(name=dataset_name, taxonomy=taxonomy, pages=page_order, extra=extra)
    return dataset, report


def save_coco(dataset, path):
    """Emit a COCO-style JSON file. Category ids are 1..n in taxonomy order."""
    cat_ids = {name: i + 1 for i, name in enumerate(dataset.taxonomy)}
    images = []
    annotations = []
    next_ann_id = 1
    for page in dataset.pages:
        img = {"id": page.image_id, "width": page.width, "height": page.height}
        if page.image_path is not None:
            img["file_name"] = page.image_path
        images.append(img)
        for ann in page.annotations:
            annotations.append(
                {
                    "id": next_ann_id,
                    "image_id": page.image_id,
                    "category_id": cat_ids[ann.category],
                    "bbox": ann.bbox.as_xywh(),
                }
            )
            next_ann_id += 1
    out = dict(dataset.extra)
    out["images"] = images
    out["annotations"] = annotations
    out["categories"] = [{"id": i, "name": name} for name, i in cat_ids.items()]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh)


@dataclass
class ValidationIssue:
    kind: str
    page_id: object
    annotation_id: object = None
    detail: str = ""

    def to_json(self):
        return {
            "kind": self.kind,
            "page_id": self.page_id,
            "annotation_id": self.annotation_id,
            "detail": self.detail,
        }


def validate(dataset):
    """List every invariant violation; an empty list means the dataset is valid."""
    issues = []
    seen_pages = set()
    for page in dataset.pages:
        if page.image_id in seen_pages:
            issues.append(ValidationIssue("duplicate_page_id", page.image_id))
        seen_pages.add(page.image_id)
        if page.width <= 0 or page.height <= 0:
            issues.append(
                ValidationIssue("bad_page_size", page.image_id,
                                detail=f"{page.width}x{page.height}")
            )
        seen_ids = set()
        for ann in page.annotations:
            if ann.id in seen_ids:
                issues.append(ValidationIssue("duplicate_annotation_id", page.image_id, ann.id))
            seen_ids.add(ann.id)
            if ann.bbox.area <= 0:
                issues.append(ValidationIssue("zero_area", page.image_id, ann.id))
            b = ann.bbox
            if b.x0 < 0 or b.y0 < 0 or b.x1 > page.width or b.y1 > page.height:
                issues.append(
                    ValidationIssue("out_of_page", page.image_id, ann.id,
                                    detail=f"{b} outside {page.width}x{page.height}")
                )
            if ann.category not in dataset.taxonomy:
                issues.append(
                    ValidationIssue("unknown_category", page.image_id, ann.id,
                                    detail=ann.category)
                )
            if not ann.category:
                issues.append(ValidationIssue("empty_category", page.image_id, ann.id))
    return issues
