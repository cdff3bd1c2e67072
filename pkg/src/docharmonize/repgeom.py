"""Representation-geometry analysis over exported detector embeddings:
per-class silhouette, k-nearest-neighbor purity, deterministic 2D projection.
"""

import json
import random
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DataError


@dataclass
class EmbeddingRecord:
    id: object
    page_id: object
    label: str
    vector: np.ndarray
    xy: tuple = None  # optional precomputed 2D coordinates


@dataclass
class EmbeddingSet:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def dim(self):
        return self.records[0].vector.shape[0] if self.records else 0

    def matrix(self):
        return np.stack([r.vector for r in self.records])

    def labels(self):
        return [r.label for r in self.records]


def load_embeddings(path, remap=None) -> EmbeddingSet:
    """Read embeddings JSONL: {id, page_id, label, vector, x?, y?} per line.

    ``remap`` is an optional TaxonomyMapping applied to labels on load.
    All vectors must share one dimension; a mismatch names the row.
    """
    records = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            vector = np.asarray(data["vector"], dtype=np.float64)
            if vector.ndim != 1:
                raise DataError(f"{path}:{lineno}: vector is not a flat array")
            if not np.all(np.isfinite(vector)):
                raise DataError(f"{path}:{lineno}: vector has non-finite values")
            if dim is None:
                dim = vector.shape[0]
                if dim < 2:
                    raise DataError(f"{path}:{lineno}: dimension must be >= 2")
            elif vector.shape[0] != dim:
                raise DataError(
                    f"{path}:{lineno}: dimension {vector.shape[0]} != {dim} of earlier rows"
                )
            label = data["label"]
            if remap is not None:
                label = remap.apply(label)
            xy = None
            if "x" in data and "y" in data:
                xy = (float(data["x"]), float(data["y"]))
            records.append(
                EmbeddingRecord(id=data["id"], page_id=data.get("page_id"),
                                label=label, vector=vector, xy=xy)
            )
    return EmbeddingSet(records=records)


def subsample_per_class(embedding_set, cap, seed=0) -> EmbeddingSet:
    """Seeded uniform subsample keeping at most ``cap`` records per class."""
    rng = random.Random(seed)
    by_label = {}
    for r in embedding_set.records:
        by_label.setdefault(r.label, []).append(r)
    kept = []
    for label in sorted(by_label):
        rows = by_label[label]
        if len(rows) > cap:
            rows = rng.sample(rows, cap)
        kept.extend(rows)
    order = {id(r): i for i, r in enumerate(embedding_set.records)}
    kept.sort(key=lambda r: order[id(r)])
    return EmbeddingSet(records=kept)


def _distances(x):
    return np.sqrt(np.asarray(_kernels.pairwise_sq_dists(np.ascontiguousarray(x))))


def silhouette_per_class(embedding_set) -> dict:
    """Mean silhouette per class with Euclidean distances.

    Per point: a = mean intra-class distance excluding self, b = min over
    other classes of the mean distance to that class, s = (b-a)/max(a,b),
    with s = 0 when max(a, b) = 0. Singleton classes score 0.
    """
    labels = embedding_set.labels()
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise DataError("silhouette needs at least 2 classes")
    d = _distances(embedding_set.matrix())
    idx_by_class = {c: np.array([i for i, l in enumerate(labels) if l == c])
                    for c in classes}
    scores = {c: [] for c in classes}
    for i, label in enumerate(labels):
        own = idx_by_class[label]
        if len(own) == 1:
            scores[label].append(0.0)
            continue
        a = d[i, own].sum() / (len(own) - 1)
        b = min(d[i, idx_by_class[c]].mean() for c in classes if c != label)
        denom = max(a, b)
        scores[label].append((b - a) / denom if denom > 0 else 0.0)
    return {c: float(np.mean(scores[c])) for c in classes}


def neighborhood_purity(embedding_set, k=100):
    """(mean purity, per-class purity) with effective k' = min(k, N-1).

    Neighbors are ranked by Euclidean distance with ties broken by ascending
    record position, so results are deterministic.
    """
    n = len(embedding_set)
    if n < 2:
        raise DataError("purity needs at least 2 points")
    if k < 1:
        raise DataError("k must be >= 1")
    k_eff = min(k, n - 1)
    d = _distances(embedding_set.matrix())
    labels = np.array(embedding_set.labels())
    purities = np.empty(n)
    try:
        order_tiebreak = np.argsort(
            np.argsort([r.id for r in embedding_set.records], kind="stable")
        )
    except TypeError:  # mixed-type ids fall back to file order
        order_tiebreak = np.arange(n)
    for i in range(n):
        rank = np.lexsort((order_tiebreak, d[i]))
        neighbors = [j for j in rank if j != i][:k_eff]
        purities[i] = np.mean(labels[neighbors] == labels[i])
    per_class = {
        c: float(purities[labels == c].mean()) for c in sorted(set(labels.tolist()))
    }
    return float(purities.mean()), per_class


def project_2d(embedding_set) -> np.ndarray:
    """Deterministic top-2 principal-component projection, (N, 2).

    Sign convention: each axis is oriented so that its largest-magnitude
    loading is positive.
    """
    x = embedding_set.matrix()
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise DataError("projection needs N >= 2 and D >= 2")
    centered = x - x.mean(axis=0)
    if not np.any(centered):
        raise DataError("zero-variance data cannot be projected")
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    for axis in range(2):
        loading = components[axis]
        if loading[np.argmax(np.abs(loading))] < 0:
            components[axis] = -loading
    return centered @ components.T


@dataclass
class GeometryReport:
    silhouette: dict
    mean_purity: float
    purity_per_class: dict
    coordinates: list  # [{id, label, x, y}]
    params: dict

    def to_json(self):
        return {
            "silhouette": self.silhouette,
            "mean_purity": self.mean_purity,
            "purity_per_class": self.purity_per_class,
            "coordinates": self.coordinates,
            "params": self.params,
        }


def analyze(embedding_set, k=100, sample_cap=None, seed=0) -> GeometryReport:
    """Silhouette + purity + 2D coordinates in one report.

    Precomputed per-record (x, y) coordinates are used when every record
    carries them; otherwise the PCA projection is computed.
    """
    if sample_cap is not None:
        embedding_set = subsample_per_class(embedding_set, sample_cap, seed=seed)
    silhouette = silhouette_per_class(embedding_set)
    mean_purity, per_class = neighborhood_purity(embedding_set, k=k)
    if all(r.xy is not None for r in embedding_set.records) and len(embedding_set):
        coords = np.array([r.xy for r in embedding_set.records])
        projection = "precomputed"
    else:
        coords = project_2d(embedding_set)
        projection = "pca"
    coordinates = [
        {"id": r.id, "label": r.label, "x": float(coords[i, 0]), "y": float(coords[i, 1])}
        for i, r in enumerate(embedding_set.records)
    ]
    return GeometryReport(
        silhouette=silhouette,
        mean_purity=mean_purity,
        purity_per_class=per_class,
        coordinates=coordinates,
        params={
            "k": k,
            "effective_k": min(k, len(embedding_set) - 1),
            "distance": "euclidean",
            "sample_cap": sample_cap,
            "seed": seed,
            "projection": projection,
        },
    )
