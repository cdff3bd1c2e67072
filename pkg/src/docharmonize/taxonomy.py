"""Label spaces, cross-dataset category mappings, and dataset remapping."""

import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import DataError, RemapError

TARGET_CATEGORIES = [
    "paragraph",
    "subheading",
    "title",
    "table",
    "image",
    "figure_caption",
    "list_item",
    "formulas",
    "page_header",
    "page_footer",
    "page_number",
    "checkbox",
    "checkbox_checked",
    "form",
    "form_key_values",
    "code_snippet",
    "other",
]


@dataclass(frozen=True)
class Taxonomy:
    """An ordered label space. Order is stable and defines numeric ids on save."""

    names: tuple

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise DataError("taxonomy contains duplicate category names")
        if any(not n for n in names):
            raise DataError("taxonomy contains an empty category name")

    def __contains__(self, name):
        return name in self.names

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def index(self, name):
        return self.names.index(name)

    def to_json(self):
        return list(self.names)

    @classmethod
    def from_json(cls, data):
        if not isinstance(data, list):
            raise DataError("taxonomy JSON must be an ordered name array")
        return cls(tuple(data))


@dataclass
class TaxonomyMapping:
    """Many-to-one function from source categories to target categories.

    ``unmapped_policy`` controls categories absent from ``entries``:
    "error" (default), "drop", or "map_to:<category>".
    """

    source: str
    target: str
    entries: dict
    unmapped_policy: str = "error"
    target_taxonomy: Taxonomy = None

    def __post_init__(self):
        if self.target_taxonomy is not None:
            bad = [t for t in self.entries.values() if t not in self.target_taxonomy]
            if bad:
                raise DataError(f"mapping targets not in target taxonomy: {sorted(set(bad))}")
        policy = self.unmapped_policy
        if policy not in ("error", "drop") and not policy.startswith("map_to:"):
            raise DataError(f"unknown unmapped_policy: {policy!r}")
        if policy.startswith("map_to:"):
            fallback = policy.split(":", 1)[1]
            if self.target_taxonomy is not None and fallback not in self.target_taxonomy:
                raise DataError(f"map_to fallback {fallback!r} not in target taxonomy")

    def apply(self, category):
        """Map one category; returns None when the policy says drop."""
        if category in self.entries:
            return self.entries[category]
        if self.unmapped_policy == "error":
            raise RemapError(f"category {category!r} has no mapping entry")
        if self.unmapped_policy == "drop":
            return None
        return self.unmapped_policy.split(":", 1)[1]

    def to_json(self):
        return {
            "source": self.source,
            "target": self.target,
            "entries": dict(self.entries),
            "unmapped_policy": self.unmapped_policy,
        }

    @classmethod
    def from_json(cls, data, target_taxonomy=None):
        try:
            return cls(
                source=data["source"],
                target=data["target"],
                entries=dict(data["entries"]),
                unmapped_policy=data.get("unmapped_policy", "error"),
                target_taxonomy=target_taxonomy,
            )
        except KeyError as exc:
            raise DataError(f"mapping JSON missing key: {exc}") from exc


@dataclass
class RemapReport:
    """Per (source, target) pair counts plus dropped-category counts."""

    pair_counts: dict = field(default_factory=dict)
    dropped: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "pair_counts": {f"{s} -> {t}": n for (s, t), n in sorted(self.pair_counts.items())},
            "dropped": dict(sorted(self.dropped.items())),
        }


def builtin_target_taxonomy() -> Taxonomy:
    """The unified 17-category target label space."""
    return Taxonomy(tuple(TARGET_CATEGORIES))


def _load_builtin_mapping(filename):
    data = json.loads(resources.files("docharmonize.data").joinpath(filename).read_text())
    return TaxonomyMapping.from_json(data, target_taxonomy=builtin_target_taxonomy())


def builtin_heron_remap() -> TaxonomyMapping:
    """Mapping from the 17 Heron canonical categories into the target space."""
    return _load_builtin_mapping("heron_to_target.json")


def builtin_unstructured_remap() -> TaxonomyMapping:
    """Mapping from the 16 Unstructured source categories into the target space."""
    return _load_builtin_mapping("unstructured_to_target.json")


def load_mapping(path, target_taxonomy=None) -> TaxonomyMapping:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return TaxonomyMapping.from_json(data, target_taxonomy=target_taxonomy)


def remap_dataset(dataset, mapping: TaxonomyMapping):
    """Replace every annotation category per the mapping; geometry is untouched.

    Returns (new dataset, RemapReport). Annotation counts are preserved unless
    the policy is "drop".
    """
    from .dataset_model import Annotation, LayoutDataset, PageRecord

    report = RemapReport()
    new_pages = []
    for page in dataset.pages:
        new_anns = []
        for ann in page.annotations:
            target = mapping.apply(ann.category)
            if target is None:
                report.dropped[ann.category] = report.dropped.get(ann.category, 0) + 1
                continue
            key = (ann.category, target)
            report.pair_counts[key] = report.pair_counts.get(key, 0) + 1
            new_anns.append(Annotation(id=ann.id, bbox=ann.bbox, category=target))
        new_pages.append(
            PageRecord(
                image_id=page.image_id,
                width=page.width,
                height=page.height,
                image_path=page.image_path,
                annotations=new_anns,
            )
        )
    if mapping.target_taxonomy is not None:
        taxonomy = mapping.target_taxonomy
    else:
        names = list(mapping.entries.values())
        if mapping.unmapped_policy.startswith("map_to:"):
            names.append(mapping.unmapped_policy.split(":", 1)[1])
        taxonomy = Taxonomy(tuple(dict.fromkeys(names)))
    out = LayoutDataset(name=dataset.name, taxonomy=taxonomy, pages=new_pages)
    return out, report
