"""Cross-dataset diagnostics: split overviews, class distributions, and
spatial statistics with matched-category ratios."""

import math
from dataclasses import dataclass, field

from .errors import DataError


@dataclass
class ClassStats:
    category: str
    count: int
    percent: float
    mean_width: float
    mean_height: float
    mean_area: float

    def to_json(self):
        return vars(self)


@dataclass
class DatasetOverview:
    images: int
    annotations: int
    avg_annotations_per_image: float = None
    avg_width: float = None
    avg_height: float = None

    def to_json(self):
        return vars(self)


@dataclass
class RatioRow:
    category: str
    width_ratio: float
    area_ratio: float

    def formatted(self):
        return {
            "category": self.category,
            "width_ratio": f"{self.width_ratio:.2f}×",
            "area_ratio": f"{self.area_ratio:.2f}×",
        }


@dataclass
class DiscrepancyReport:
    overviews: dict = field(default_factory=dict)
    class_stats: dict = field(default_factory=dict)  # dataset name -> [ClassStats]
    ratio_rows: list = field(default_factory=list)
    unmatched: dict = field(default_factory=dict)  # dataset name -> [category]

    def to_json(self):
        return {
            "overviews": {k: v.to_json() for k, v in self.overviews.items()},
            "class_stats": {
                k: [s.to_json() for s in stats] for k, stats in self.class_stats.items()
            },
            "ratio_rows": [
                {"category": r.category, "width_ratio": r.width_ratio,
                 "area_ratio": r.area_ratio} for r in self.ratio_rows
            ],
            "ratio_rows_formatted": [r.formatted() for r in self.ratio_rows],
            "unmatched": dict(self.unmatched),
        }


def average_per_image(annotations, images):
    """Mean annotations per image rounded to 1 decimal (Avg Ann/Img column)."""
    if images == 0:
        return None
    return round(annotations / images, 1)


def dataset_overview(dataset) -> DatasetOverview:
    images = dataset.page_count
    annotations = dataset.annotation_count
    if images == 0:
        return DatasetOverview(images=0, annotations=0)
    return DatasetOverview(
        images=images,
        annotations=annotations,
        avg_annotations_per_image=average_per_image(annotations, images),
        avg_width=math.fsum(p.width for p in dataset.pages) / images,
        avg_height=math.fsum(p.height for p in dataset.pages) / images,
    )


def distribution_from_counts(counts: dict) -> list:
    """ClassStats (percent only) from raw per-category counts, sorted by
    descending count. Percent = 100 * count / total, reported to 1 decimal."""
    total = sum(counts.values())
    stats = []
    for category, count in counts.items():
        percent = round(100.0 * count / total, 1) if total else 0.0
        stats.append(ClassStats(category, count, percent, 0.0, 0.0, 0.0))
    stats.sort(key=lambda s: (-s.count, s.category))
    return stats


def class_distribution(dataset) -> list:
    """Counts, percents, and mean box dimensions per category."""
    counts = {}
    sums = {}
    for page in dataset.pages:
        for ann in page.annotations:
            counts[ann.category] = counts.get(ann.category, 0) + 1
            w, h, a = sums.get(ann.category, (0.0, 0.0, 0.0))
            sums[ann.category] = (w + ann.bbox.width, h + ann.bbox.height,
                                  a + ann.bbox.area)
    stats = distribution_from_counts(counts)
    for s in stats:
        w, h, a = sums[s.category]
        s.mean_width = w / s.count
        s.mean_height = h / s.count
        s.mean_area = a / s.count
    return stats


def spatial_stats(dataset, category) -> ClassStats:
    """Per-annotation arithmetic means of width, height, and area for one
    category (area averaged per box, not width-mean x height-mean)."""
    widths, heights, areas = [], [], []
    total = 0
    for page in dataset.pages:
        for ann in page.annotations:
            total += 1
            if ann.category == category:
                widths.append(ann.bbox.width)
                heights.append(ann.bbox.height)
                areas.append(ann.bbox.area)
    if not widths:
        raise DataError(f"category {category!r} not present in dataset {dataset.name!r}")
    n = len(widths)
    percent = round(100.0 * n / total, 1) if total else 0.0
    return ClassStats(
        category=category,
        count=n,
        percent=percent,
        mean_width=math.fsum(widths) / n,
        mean_height=math.fsum(heights) / n,
        mean_area=math.fsum(areas) / n,
    )


def cross_ratios(stats_a: ClassStats, stats_b: ClassStats) -> RatioRow:
    """Width and area ratios a/b for one matched category."""
    if stats_b.mean_width == 0 or stats_b.mean_area == 0:
        raise DataError(
            f"degenerate stats for {stats_b.category!r}: zero mean dimensions"
        )
    return RatioRow(
        category=stats_a.category,
        width_ratio=stats_a.mean_width / stats_b.mean_width,
        area_ratio=stats_a.mean_area / stats_b.mean_area,
    )


def build_report(datasets) -> DiscrepancyReport:
    """Full diagnostic over a list of datasets. Ratio rows (first dataset
    over second) exist only for categories present in both of the first two
    datasets; categories unique to one dataset are listed as unmatched."""
    report = DiscrepancyReport()
    per_dataset_stats = []
    for ds in datasets:
        report.overviews[ds.name] = dataset_overview(ds)
        stats = class_distribution(ds)
        report.class_stats[ds.name] = stats
        per_dataset_stats.append({s.category: s for s in stats})
    if len(datasets) >= 2:
        a, b = per_dataset_stats[0], per_dataset_stats[1]
        shared = [c for c in a if c in b]
        for category in sorted(shared):
            report.ratio_rows.append(cross_ratios(a[category], b[category]))
        report.unmatched[datasets[0].name] = sorted(set(a) - set(b))
        report.unmatched[datasets[1].name] = sorted(set(b) - set(a))
    return report


def render_text(report: DiscrepancyReport) -> str:
    """Aligned-text rendering of the report, one block per table."""
    lines = []
    lines.append("== Dataset overview ==")
    lines.append(f"{'dataset':<24}{'images':>10}{'annotations':>14}{'avg/img':>10}{'avg size':>16}")
    for name, ov in report.overviews.items():
        if ov.images == 0:
            lines.append(f"{name:<24}{0:>10}{0:>14}{'-':>10}{'-':>16}")
            continue
        size = f"{ov.avg_width:.0f}x{ov.avg_height:.0f}"
        lines.append(
            f"{name:<24}{ov.images:>10}{ov.annotations:>14}"
            f"{ov.avg_annotations_per_image:>10.1f}{size:>16}"
        )
    for name, stats in report.class_stats.items():
        lines.append("")
        lines.append(f"== Class distribution: {name} ==")
        lines.append(f"{'category':<24}{'count':>10}{'%':>8}{'mean W':>10}{'mean H':>10}{'mean area':>12}")
        for s in stats:
            lines.append(
                f"{s.category:<24}{s.count:>10}{s.percent:>8.1f}"
                f"{s.mean_width:>10.1f}{s.mean_height:>10.1f}{s.mean_area:>12.0f}"
            )
    if report.ratio_rows:
        lines.append("")
        lines.append("== Matched-category ratios (first / second) ==")
        lines.append(f"{'category':<24}{'W ratio':>10}{'area ratio':>12}")
        for r in report.ratio_rows:
            lines.append(f"{r.category:<24}{r.width_ratio:>9.2f}×{r.area_ratio:>11.2f}×")
    if report.unmatched:
        lines.append("")
        for name, cats in report.unmatched.items():
            lines.append(f"unmatched in {name}: {', '.join(cats) if cats else '(none)'}")
    return "\n".join(lines) + "\n"
