"""Evaluation suite over predicted-vs-reference structured documents:
detection quality, content and structure fidelity, spatial consistency.

Text normalization used by every "adjusted"/"corrected" variant: Unicode
NFC, casefold, whitespace runs collapsed to single spaces, trimmed.
"""

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .dataset_model import Annotation, BBox
from .errors import DataError


def normalize_text(s: str) -> str:
    s = unicodedata.normalize("NFC", s).casefold()
    return " ".join(s.split())


# --- structured document model ---

@dataclass
class TableCell:
    row: int
    col: int
    row_span: int = 1
    col_span: int = 1
    text: str = ""


@dataclass
class TableGrid:
    n_rows: int
    n_cols: int
    cells: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for c in self.cells:
            if (c.row, c.col) in seen:
                raise DataError(f"duplicate cell anchor ({c.row}, {c.col})")
            seen.add((c.row, c.col))
            if c.row + c.row_span > self.n_rows or c.col + c.col_span > self.n_cols:
                raise DataError(f"cell ({c.row}, {c.col}) span leaves the grid")


@dataclass
class Element:
    category: str
    bbox: BBox
    text: str = ""
    table: TableGrid = None


@dataclass
class StructuredDoc:
    page_id: object
    elements: list = field(default_factory=list)  # reading order

    @property
    def text(self):
        return "\n".join(e.text for e in self.elements)

    @property
    def tables(self):
        return [e.table for e in self.elements if e.table is not None]


def load_structured_docs(path):
    """Read a one-page-per-line JSONL file of structured documents."""
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            elements = []
            for el in data.get("elements", []):
                table = None
                if el.get("table") is not None:
                    t = el["table"]
                    table = TableGrid(
                        n_rows=t["n_rows"],
                        n_cols=t["n_cols"],
                        cells=[
                            TableCell(
                                row=c["row"], col=c["col"],
                                row_span=c.get("row_span", 1),
                                col_span=c.get("col_span", 1),
                                text=c.get("text", ""),
                            )
                            for c in t.get("cells", [])
                        ],
                    )
                elements.append(
                    Element(
                        category=el["category"],
                        bbox=BBox(*[float(v) for v in el["bbox"]]),
                        text=el.get("text", ""),
                        table=table,
                    )
                )
            docs.append(StructuredDoc(page_id=data["page_id"], elements=elements))
    return docs


def save_structured_docs(docs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            elements = []
            for el in doc.elements:
                rec = {
                    "category": el.category,
                    "bbox": [el.bbox.x0, el.bbox.y0, el.bbox.x1, el.bbox.y1],
                    "text": el.text,
                }
                if el.table is not None:
                    rec["table"] = {
                        "n_rows": el.table.n_rows,
                        "n_cols": el.table.n_cols,
                        "cells": [vars(c) for c in el.table.cells],
                    }
                elements.append(rec)
            fh.write(json.dumps({"page_id": doc.page_id, "elements": elements}) + "\n")


# --- primitives ---

def iou(a: BBox, b: BBox) -> float:
    ix0 = max(a.x0, b.x0)
    iy0 = max(a.y0, b.y0)
    ix1 = min(a.x1, b.x1)
    iy1 = min(a.y1, b.y1)
    if ix1 <= ix0 or iy1 <= iy0:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def levenshtein(a: str, b: str) -> int:
    return int(_kernels.levenshtein(_kernels.codepoints(a), _kernels.codepoints(b)))


def ned(pred_text: str, ref_text: str) -> float:
    """Normalized edit-distance similarity: 1 - dist / max length."""
    if not pred_text and not ref_text:
        return 1.0
    return 1.0 - levenshtein(pred_text, ref_text) / max(len(pred_text), len(ref_text))


def adjusted_ned(pred_text: str, ref_text: str) -> float:
    return ned(normalize_text(pred_text), normalize_text(ref_text))


# --- detection matching ---

def match_one_to_one(pred, ref, iou_threshold=0.5):
    """Optimal one-to-one matching restricted to same-category pairs with
    IoU >= threshold, maximizing match count and breaking ties by total IoU.
    Returns a list of (pred_index, ref_index, iou)."""
    if not pred or not ref:
        return []
    boxes_p = np.array([[a.bbox.x0, a.bbox.y0, a.bbox.x1, a.bbox.y1] for a in pred])
    boxes_r = np.array([[a.bbox.x0, a.bbox.y0, a.bbox.x1, a.bbox.y1] for a in ref])
    ious = np.asarray(_kernels.iou_matrix(boxes_p, boxes_r))
    feasible = ious >= iou_threshold
    for i, p in enumerate(pred):
        for j, r in enumerate(ref):
            if p.category != r.category:
                feasible[i, j] = False
    if not feasible.any():
        return []
    # count dominates: any feasible pair is worth more than all IoU combined
    big = 2.0 * (max(len(pred), len(ref)) + 1)
    scores = np.where(feasible, big + ious, 0.0)
    rows, cols = linear_sum_assignment(scores, maximize=True)
    return [(int(i), int(j), float(ious[i, j])) for i, j in zip(rows, cols) if feasible[i, j]]


def detection_prf(pred, ref, iou_threshold=0.5):
    """(precision, recall, f) under the matching protocol above."""
    if not 0 < iou_threshold <= 1:
        raise DataError(f"iou_threshold {iou_threshold} outside (0, 1]")
    if not pred and not ref:
        return 1.0, 1.0, 1.0
    tp = len(match_one_to_one(pred, ref, iou_threshold))
    precision = tp / len(pred) if pred else 0.0
    recall = tp / len(ref) if ref else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f


# --- tree edit distance (Zhang-Shasha) ---

class _Node:
    __slots__ = ("kind", "label", "text", "children")

    def __init__(self, kind, label="", text="", children=None):
        self.kind = kind
        self.label = label
        self.text = text
        self.children = children or []


def _table_tree(grid, normalizer):
    root = _Node("root")
    if grid is None:
        return root
    rows = {}
    for cell in sorted(grid.cells, key=lambda c: (c.row, c.col)):
        node = _Node(
            "cell",
            label=f"{cell.row_span}x{cell.col_span}",
            text=normalizer(cell.text),
        )
        rows.setdefault(cell.row, []).append(node)
    for r in sorted(rows):
        root.children.append(_Node("row", children=rows[r]))
    return root


def _page_tree(doc, normalizer):
    root = _Node("root")
    for el in doc.elements:
        if el.table is not None:
            table_node = _table_tree(el.table, normalizer)
            node = _Node("element", label=el.category, text=normalizer(el.text),
                         children=table_node.children)
        else:
            node = _Node("element", label=el.category, text=normalizer(el.text))
        root.children.append(node)
    return root


def _rename_cost(a, b):
    if a.kind != b.kind:
        return 1.0
    if a.kind in ("root", "row"):
        return 0.0
    if a.label != b.label:
        return 1.0
    return 1.0 - ned(a.text, b.text)


def tree_edit_distance(t1, t2, rename=_rename_cost):
    """Ordered tree edit distance with unit insert/delete costs."""

    def annotate(root):
        post = []

        def walk(node):
            for child in node.children:
                walk(child)
            post.append(node)

        walk(root)
        index = {id(n): i for i, n in enumerate(post)}
        lmld = [0] * len(post)

        def leftmost(node):
            while node.children:
                node = node.children[0]
            return index[id(node)]

        for i, n in enumerate(post):
            lmld[i] = leftmost(n)
        keyroots = []
        seen = set()
        for i in range(len(post) - 1, -1, -1):
            if lmld[i] not in seen:
                seen.add(lmld[i])
                keyroots.append(i)
        keyroots.sort()
        return post, lmld, keyroots

    post1, l1, kr1 = annotate(t1)
    post2, l2, kr2 = annotate(t2)
    n, m = len(post1), len(post2)
    td = np.zeros((n, m))

    for i in kr1:
        for j in kr2:
            li, lj = l1[i], l2[j]
            rows = i - li + 2
            cols = j - lj + 2
            fd = np.zeros((rows, cols))
            for di in range(1, rows):
                fd[di, 0] = fd[di - 1, 0] + 1
            for dj in range(1, cols):
                fd[0, dj] = fd[0, dj - 1] + 1
            for di in range(1, rows):
                for dj in range(1, cols):
                    gi = li + di - 1
                    gj = lj + dj - 1
                    if l1[gi] == li and l2[gj] == lj:
                        fd[di, dj] = min(
                            fd[di - 1, dj] + 1,
                            fd[di, dj - 1] + 1,
                            fd[di - 1, dj - 1] + rename(post1[gi], post2[gj]),
                        )
                        td[gi, gj] = fd[di, dj]
                    else:
                        fd[di, dj] = min(
                            fd[di - 1, dj] + 1,
                            fd[di, dj - 1] + 1,
                            fd[l1[gi] - li, l2[gj] - lj] + td[gi, gj],
                        )
    return float(td[n - 1, m - 1])


def _tree_size(node):
    return 1 + sum(_tree_size(c) for c in node.children)


def _teds_from_trees(t1, t2):
    ted = tree_edit_distance(t1, t2)
    denom = max(_tree_size(t1), _tree_size(t2))
    return 1.0 - ted / denom if denom else 1.0


def teds(pred_table, ref_table, corrected=False):
    """Tree-edit-distance similarity between two table grids in [0, 1]."""
    normalizer = normalize_text if corrected else (lambda s: s)
    return _teds_from_trees(_table_tree(pred_table, normalizer),
                            _table_tree(ref_table, normalizer))


def page_teds(pred_doc, ref_doc, corrected=True):
    """Whole-page tree similarity; tables are expanded as subtrees."""
    normalizer = normalize_text if corrected else (lambda s: s)
    return _teds_from_trees(_page_tree(pred_doc, normalizer),
                            _page_tree(ref_doc, normalizer))


# --- cell-level table metrics ---

def cell_metrics(pred_table, ref_table, shift_window=2):
    """(content_acc, index_acc, shifted_content_acc) over normalized text."""
    pred_cells = [] if pred_table is None else pred_table.cells
    ref_cells = [] if ref_table is None else ref_table.cells
    if not ref_cells:
        return 1.0, 1.0, 1.0
    pred_texts = Counter(normalize_text(c.text) for c in pred_cells)
    ref_texts = Counter(normalize_text(c.text) for c in ref_cells)
    # matching by exact text equality decomposes per distinct value
    matched = sum((pred_texts & ref_texts).values())
    content_acc = matched / len(ref_cells)

    pred_by_anchor = {(c.row, c.col): normalize_text(c.text) for c in pred_cells}

    def shifted_acc(dr, dc):
        hits = 0
        for c in ref_cells:
            if pred_by_anchor.get((c.row - dr, c.col - dc)) == normalize_text(c.text):
                hits += 1
        return hits / len(ref_cells)

    index_acc = shifted_acc(0, 0)
    shifted = max(
        shifted_acc(dr, dc)
        for dr in range(-shift_window, shift_window + 1)
        for dc in range(-shift_window, shift_window + 1)
    )
    return content_acc, index_acc, shifted


# --- token and alignment metrics ---

def token_metrics(pred_doc, ref_doc, iou_threshold=0.5):
    """(percent_tokens_found, percent_tokens_added, element_alignment)."""
    pred_tokens = Counter(normalize_text(pred_doc.text).split())
    ref_tokens = Counter(normalize_text(ref_doc.text).split())
    inter = sum((pred_tokens & ref_tokens).values())
    n_pred = sum(pred_tokens.values())
    n_ref = sum(ref_tokens.values())
    found = inter / n_ref if n_ref else 1.0
    added = (n_pred - inter) / n_pred if n_pred else 0.0

    pairs = match_one_to_one(pred_doc.elements, ref_doc.elements, iou_threshold)
    if pairs:
        alignment = sum(
            ned(pred_doc.elements[i].text, ref_doc.elements[j].text) for i, j, _ in pairs
        ) / len(pairs)
    else:
        alignment = 0.0
    return found, added, alignment


def bbox_overlap_stats(pred):
    """(max_iou, mean_iou, num_overlapping_pairs) over unordered pred pairs
    with positive IoU; all zero when nothing overlaps."""
    if len(pred) < 2:
        return 0.0, 0.0, 0
    boxes = np.array([[a.bbox.x0, a.bbox.y0, a.bbox.x1, a.bbox.y1] for a in pred])
    ious = np.asarray(_kernels.iou_matrix(boxes, boxes))
    upper = ious[np.triu_indices(len(pred), k=1)]
    overlapping = upper[upper > 0.0]
    if overlapping.size == 0:
        return 0.0, 0.0, 0
    return float(overlapping.max()), float(overlapping.mean()), int(overlapping.size)


# --- aggregation ---

METRIC_NAMES = [
    "adjusted_NED",
    "NED",
    "detection_f",
    "detection_precision",
    "detection_recall",
    "page_teds_corrected",
    "table_teds",
    "table_teds_corrected",
    "cell_level_content_acc",
    "cell_level_index_acc",
    "shifted_cell_content_acc",
    "element_alignment",
    "percent_tokens_found",
    "percent_tokens_added",
    "bbox_max_iou",
    "bbox_mean_iou",
    "bbox_num_overlapping_pairs",
]


@dataclass
class MetricsReport:
    adjusted_NED: float
    NED: float
    detection_f: float
    detection_precision: float
    detection_recall: float
    page_teds_corrected: float
    table_teds: float
    table_teds_corrected: float
    cell_level_content_acc: float
    cell_level_index_acc: float
    shifted_cell_content_acc: float
    element_alignment: float
    percent_tokens_found: float
    percent_tokens_added: float
    bbox_max_iou: float
    bbox_mean_iou: float
    bbox_num_overlapping_pairs: float

    def to_json(self):
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _mean(values):
    return sum(values) / len(values) if values else 1.0


def evaluate_docs(pred_docs, ref_docs, iou_threshold=0.5) -> MetricsReport:
    """Per-page metrics macro-averaged over pages; table metrics averaged
    over reference tables (paired with pred tables by reading order, missing
    pred tables scored against an empty grid)."""
    for docs, side in ((pred_docs, "pred"), (ref_docs, "ref")):
        ids = [d.page_id for d in docs]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate page ids on the {side} side")
    pred_by_id = {d.page_id: d for d in pred_docs}
    ref_by_id = {d.page_id: d for d in ref_docs}
    page_ids = list(dict.fromkeys(
        [d.page_id for d in ref_docs] + [d.page_id for d in pred_docs]
    ))

    per_page = {name: [] for name in METRIC_NAMES}
    table_scores = {name: [] for name in
                    ("table_teds", "table_teds_corrected", "cell_level_content_acc",
                     "cell_level_index_acc", "shifted_cell_content_acc")}

    for page_id in page_ids:
        pred = pred_by_id.get(page_id, StructuredDoc(page_id=page_id))
        ref = ref_by_id.get(page_id, StructuredDoc(page_id=page_id))
        per_page["NED"].append(ned(pred.text, ref.text))
        per_page["adjusted_NED"].append(adjusted_ned(pred.text, ref.text))
        p, r, f = detection_prf(pred.elements, ref.elements, iou_threshold)
        per_page["detection_precision"].append(p)
        per_page["detection_recall"].append(r)
        per_page["detection_f"].append(f)
        per_page["page_teds_corrected"].append(page_teds(pred, ref, corrected=True))
        found, added, alignment = token_metrics(pred, ref, iou_threshold)
        per_page["percent_tokens_found"].append(found)
        per_page["percent_tokens_added"].append(added)
        per_page["element_alignment"].append(alignment)
        mx, mn, num = bbox_overlap_stats(pred.elements)
        per_page["bbox_max_iou"].append(mx)
        per_page["bbox_mean_iou"].append(mn)
        per_page["bbox_num_overlapping_pairs"].append(num)

        pred_tables = pred.tables
        for t_idx, ref_table in enumerate(ref.tables):
            pred_table = pred_tables[t_idx] if t_idx < len(pred_tables) else None
            table_scores["table_teds"].append(teds(pred_table, ref_table, corrected=False))
            table_scores["table_teds_corrected"].append(
                teds(pred_table, ref_table, corrected=True)
            )
            content, index, shifted = cell_metrics(pred_table, ref_table)
            table_scores["cell_level_content_acc"].append(content)
            table_scores["cell_level_index_acc"].append(index)
            table_scores["shifted_cell_content_acc"].append(shifted)

    down_metrics = ("percent_tokens_added", "bbox_max_iou", "bbox_mean_iou",
                    "bbox_num_overlapping_pairs")
    values = {}
    for name in METRIC_NAMES:
        if name in table_scores:
            values[name] = _mean(table_scores[name])
        else:
            pages = per_page[name]
            if pages:
                values[name] = sum(pages) / len(pages)
            else:
                # empty corpus: up-metrics vacuously perfect, down-metrics zero
                values[name] = 0.0 if name in down_metrics else 1.0
    return MetricsReport(**values)
