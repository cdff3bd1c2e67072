import random

import pytest

from docharmonize.dataset_model import Annotation, BBox, LayoutDataset, PageRecord
from docharmonize.harmonizer import default_rules
from docharmonize.taxonomy import (
    Taxonomy,
    TaxonomyMapping,
    builtin_target_taxonomy,
)


@pytest.fixture
def rules():
    return default_rules()


@pytest.fixture
def identity_mapping():
    names = builtin_target_taxonomy().names
    return TaxonomyMapping(
        source="target", target="target",
        entries={n: n for n in names},
        target_taxonomy=builtin_target_taxonomy(),
    )


def random_box(rng, page_w=1000.0, page_h=1000.0, max_size=300.0):
    w = rng.uniform(1.0, max_size)
    h = rng.uniform(1.0, max_size)
    x0 = rng.uniform(0.0, page_w - w)
    y0 = rng.uniform(0.0, page_h - h)
    return BBox(x0, y0, x0 + w, y0 + h)


def random_page(rng, image_id, n_annotations=None, categories=("paragraph", "table", "title")):
    if n_annotations is None:
        n_annotations = rng.randint(0, 12)
    anns = [
        Annotation(id=i + 1, bbox=random_box(rng), category=rng.choice(categories))
        for i in range(n_annotations)
    ]
    return PageRecord(image_id=image_id, width=1000.0, height=1000.0,
                      image_path=f"page_{image_id}.png", annotations=anns)


def random_dataset(rng, name="random", n_pages=None):
    if n_pages is None:
        n_pages = rng.randint(0, 5)
    categories = ("paragraph", "table", "title", "image")
    pages = [random_page(rng, i + 1, categories=categories) for i in range(n_pages)]
    return LayoutDataset(name=name, taxonomy=Taxonomy(categories), pages=pages)


def fragmented_page(image_id, n_blocks=3, lines_per_block=10, category="paragraph"):
    """OCR-line-style page: each logical block split into thin line boxes."""
    anns = []
    next_id = 1
    for b in range(n_blocks):
        y_top = 50.0 + b * 300.0
        for line in range(lines_per_block):
            y0 = y_top + line * 20.0
            anns.append(Annotation(id=next_id, bbox=BBox(100.0, y0, 600.0, y0 + 18.0),
                                   category=category))
            next_id += 1
    return PageRecord(image_id=image_id, width=800.0, height=1100.0,
                      annotations=anns)


def coarse_page(image_id, n_blocks=3, category="paragraph"):
    """Coarse-block counterpart of fragmented_page: one box per block."""
    anns = []
    for b in range(n_blocks):
        y_top = 50.0 + b * 300.0
        anns.append(Annotation(id=b + 1, bbox=BBox(100.0, y_top, 600.0, y_top + 200.0),
                               category=category))
    return PageRecord(image_id=image_id, width=800.0, height=1100.0,
                      annotations=anns)


@pytest.fixture
def two_corpus():
    """Synthetic granularity conflict: fragmented corpus A vs coarse corpus B."""
    taxonomy = builtin_target_taxonomy()
    corpus_a = LayoutDataset(
        name="corpus_a", taxonomy=taxonomy,
        pages=[fragmented_page(i + 1) for i in range(3)],
    )
    corpus_b = LayoutDataset(
        name="corpus_b", taxonomy=taxonomy,
        pages=[coarse_page(i + 1) for i in range(3)],
    )
    return corpus_a, corpus_b


# 1x1 transparent PNG, enough for image-grounding checks
PNG_1X1 = bytes.fromhex(
    "89504e470d0a1a0a0000000d494844520000000100000001080600000"
    "01f15c4890000000d4944415478da63fcffffff7f0003000503020032"
    "7ddbbc0000000049454e44ae426082"
)


@pytest.fixture
def page_image(tmp_path):
    path = tmp_path / "page.png"
    path.write_bytes(PNG_1X1)
    return str(path)
