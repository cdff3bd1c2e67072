"""Partition-merge-adjust engine with conservation checks.

A page's source annotations are split into disjoint covering groups; each
group becomes exactly one output annotation. validate_plan is the single
gate every plan must pass (agents cannot bypass it), and apply_plan keeps
full provenance so conservation is auditable after the fact.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .dataset_model import Annotation, BBox, LayoutDataset, PageRecord
from .errors import DataError, JobError, PlanContractError
from .taxonomy import Taxonomy, builtin_target_taxonomy


@dataclass
class CategoryConvention:
    description: str = ""
    mergeable: bool = False
    merge_gap_fraction: float = 0.01
    clip_to_page: bool = True

    def __post_init__(self):
        if not 0.0 <= self.merge_gap_fraction <= 0.25:
            raise DataError(
                f"merge_gap_fraction {self.merge_gap_fraction} outside [0, 0.25]"
            )


@dataclass
class RuleSet:
    """The target annotation standard: one convention per target category."""

    target_taxonomy: Taxonomy
    conventions: dict

    def __post_init__(self):
        missing = [c for c in self.target_taxonomy if c not in self.conventions]
        for c in missing:
            self.conventions[c] = CategoryConvention()
        unknown = [c for c in self.conventions if c not in self.target_taxonomy]
        if unknown:
            raise DataError(f"conventions for categories outside taxonomy: {unknown}")

    def convention(self, category) -> CategoryConvention:
        return self.conventions[category]

    def to_json(self):
        return {
            "target_taxonomy": self.target_taxonomy.to_json(),
            "conventions": {
                name: {
                    "description": c.description,
                    "mergeable": c.mergeable,
                    "merge_gap_fraction": c.merge_gap_fraction,
                    "clip_to_page": c.clip_to_page,
                }
                for name, c in self.conventions.items()
            },
        }

    @classmethod
    def from_json(cls, data):
        taxonomy = Taxonomy.from_json(data["target_taxonomy"])
        conventions = {
            name: CategoryConvention(
                description=c.get("description", ""),
                mergeable=c.get("mergeable", False),
                merge_gap_fraction=c.get("merge_gap_fraction", 0.01),
                clip_to_page=c.get("clip_to_page", True),
            )
            for name, c in data.get("conventions", {}).items()
        }
        return cls(target_taxonomy=taxonomy, conventions=conventions)


def load_rules(path) -> RuleSet:
    with open(path, "r", encoding="utf-8") as fh:
        return RuleSet.from_json(json.load(fh))


def default_rules() -> RuleSet:
    """Rules for the built-in target taxonomy: text-like categories merge."""
    mergeable = {"paragraph", "list_item", "other"}
    conventions = {}
    for name in builtin_target_taxonomy():
        conventions[name] = CategoryConvention(
            description=f"Standard conventions for {name} regions.",
            mergeable=name in mergeable,
            merge_gap_fraction=0.01,
            clip_to_page=True,
        )
    return RuleSet(target_taxonomy=builtin_target_taxonomy(), conventions=conventions)


@dataclass
class Partition:
    """Disjoint covering grouping of a page's annotation ids."""

    groups: list  # list of frozenset of ids

    def __post_init__(self):
        self.groups = [frozenset(g) for g in self.groups]

    @property
    def group_count(self):
        return len(self.groups)


@dataclass
class GroupDirective:
    target_category: str
    bbox_override: BBox = None


@dataclass
class HarmonizationPlan:
    partition: Partition
    directives: list  # one GroupDirective per group

    def __post_init__(self):
        if len(self.directives) != len(self.partition.groups):
            raise DataError(
                f"directive count {len(self.directives)} != "
                f"group count {len(self.partition.groups)}"
            )


@dataclass
class HarmonizedPage:
    page_id: object
    annotations: list
    provenance: dict  # harmonized annotation id -> frozenset of source ids


@dataclass
class PlanViolation:
    kind: str
    detail: str

    def __str__(self):
        return f"{self.kind}: {self.detail}"


def validate_plan(page: PageRecord, plan: HarmonizationPlan, rules: RuleSet):
    """Return [] iff the plan satisfies disjointness, coverage, category
    membership, and override grounding. Never mutates inputs."""
    violations = []
    source_ids = {a.id for a in page.annotations}
    seen = set()
    for gi, group in enumerate(plan.partition.groups):
        if not group:
            violations.append(PlanViolation("empty_group", f"group {gi} is empty"))
        overlap = group & seen
        if overlap:
            violations.append(
                PlanViolation("disjointness", f"ids {sorted(overlap)} appear in multiple groups")
            )
        invented = group - source_ids
        if invented:
            violations.append(
                PlanViolation("invented_ids", f"group {gi} references unknown ids {sorted(invented)}")
            )
        seen |= group
    missing = source_ids - seen
    if missing:
        violations.append(
            PlanViolation("coverage", f"ids {sorted(missing)} not covered by any group")
        )

    by_id = {a.id: a for a in page.annotations}
    for gi, (group, directive) in enumerate(zip(plan.partition.groups, plan.directives)):
        if directive.target_category not in rules.target_taxonomy:
            violations.append(
                PlanViolation(
                    "unknown_category",
                    f"group {gi} targets {directive.target_category!r} outside the taxonomy",
                )
            )
        override = directive.bbox_override
        if override is None:
            continue
        if (
            override.x0 < 0
            or override.y0 < 0
            or override.x1 > page.width
            or override.y1 > page.height
        ):
            violations.append(
                PlanViolation("override_out_of_page", f"group {gi} override {override} leaves the page")
            )
        members = [by_id[i] for i in group if i in by_id]
        if members and not any(override.intersects(a.bbox) for a in members):
            violations.append(
                PlanViolation(
                    "override_detached",
                    f"group {gi} override {override} does not intersect any source box",
                )
            )
    return violations


def apply_plan(page: PageRecord, plan: HarmonizationPlan, rules: RuleSet) -> HarmonizedPage:
    """Transform each group into one harmonized annotation.

    Raises PlanContractError if validate_plan would reject the plan.
    Output ids are 1..G in canonical group order (ascending min source id).
    """
    violations = validate_plan(page, plan, rules)
    if violations:
        raise PlanContractError(
            f"plan rejected for page {page.image_id}", violations=violations
        )
    by_id = {a.id: a for a in page.annotations}
    ordered = sorted(
        zip(plan.partition.groups, plan.directives), key=lambda gd: min(gd[0])
    ) if plan.partition.groups else []

    annotations = []
    provenance = {}
    for out_id, (group, directive) in enumerate(ordered, start=1):
        members = [by_id[i] for i in sorted(group)]
        if directive.bbox_override is not None:
            bbox = directive.bbox_override
        else:
            bbox = members[0].bbox
            for m in members[1:]:
                bbox = bbox.union(m.bbox)
        if rules.convention(directive.target_category).clip_to_page:
            bbox = bbox.clamped(page.width, page.height)
        annotations.append(Annotation(id=out_id, bbox=bbox, category=directive.target_category))
        provenance[out_id] = frozenset(group)
    return HarmonizedPage(page_id=page.image_id, annotations=annotations, provenance=provenance)


def _connected_components(adjacency):
    """Connected components over an index adjacency list, DFS order-stable."""
    n = len(adjacency)
    seen = [False] * n
    components = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            node = stack.pop()
            comp.append(node)
            for nxt in adjacency[node]:
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append(nxt)
        components.append(comp)
    return components


def rule_agent_propose(page: PageRecord, mapping, rules: RuleSet) -> HarmonizationPlan:
    """Deterministic reference agent.

    Remaps each category, then merges same-category mergeable annotations
    whose boxes come within a page-height-relative gap of each other
    (each box dilated by half the gap budget; edge contact counts).
    """
    remapped = []
    for ann in page.annotations:
        target = mapping.apply(ann.category)
        if target is None:
            # drop policy is meaningless inside a conservation-constrained
            # plan; keep the annotation and send it to the fallback class
            target = "other" if "other" in rules.target_taxonomy else ann.category
        remapped.append((ann, target))

    groups = []
    directives = []
    by_category = {}
    for ann, target in remapped:
        by_category.setdefault(target, []).append(ann)

    for target in sorted(by_category):
        anns = by_category[target]
        conv = rules.convention(target) if target in rules.target_taxonomy else CategoryConvention()
        if not conv.mergeable or len(anns) == 1:
            for ann in anns:
                groups.append(frozenset([ann.id]))
                directives.append(GroupDirective(target_category=target))
            continue
        half_gap = conv.merge_gap_fraction * page.height / 2.0
        dilated = [
            BBox(a.bbox.x0 - half_gap, a.bbox.y0 - half_gap,
                 a.bbox.x1 + half_gap, a.bbox.y1 + half_gap)
            for a in anns
        ]
        adjacency = [[] for _ in anns]
        for i in range(len(anns)):
            for j in range(i + 1, len(anns)):
                a, b = dilated[i], dilated[j]
                # closed intersection: a gap exactly equal to the budget merges
                if a.x0 <= b.x1 and b.x0 <= a.x1 and a.y0 <= b.y1 and b.y0 <= a.y1:
                    adjacency[i].append(j)
                    adjacency[j].append(i)
        for comp in _connected_components(adjacency):
            groups.append(frozenset(anns[i].id for i in comp))
            directives.append(GroupDirective(target_category=target))

    order = sorted(range(len(groups)), key=lambda i: min(groups[i]) if groups[i] else -1)
    return HarmonizationPlan(
        partition=Partition(groups=[groups[i] for i in order]),
        directives=[directives[i] for i in order],
    )


class RuleAgent:
    """Agent wrapper binding a mapping and rules to rule_agent_propose."""

    name = "rule"

    def __init__(self, mapping, rules):
        self.mapping = mapping
        self.rules = rules

    def propose(self, page: PageRecord) -> HarmonizationPlan:
        return rule_agent_propose(page, self.mapping, self.rules)


def identity_plan(page: PageRecord, mapping) -> HarmonizationPlan:
    """Remap-only fallback: every annotation in its own singleton group."""
    groups = []
    directives = []
    for ann in sorted(page.annotations, key=lambda a: a.id):
        groups.append(frozenset([ann.id]))
        target = mapping.apply(ann.category)
        directives.append(GroupDirective(target_category=target if target else ann.category))
    return HarmonizationPlan(partition=Partition(groups=groups), directives=directives)


@dataclass
class PageOutcome:
    page_id: object
    status: str  # "ok", "fallback", "empty"
    groups: int = 0
    merges: int = 0
    attempts: int = 1
    reason: str = ""


@dataclass
class JobReport:
    outcomes: list = field(default_factory=list)
    group_size_histogram: dict = field(default_factory=dict)
    merged_groups: int = 0
    fallback_pages: int = 0

    def to_json(self):
        return {
            "outcomes": [vars(o) for o in self.outcomes],
            "group_size_histogram": {str(k): v for k, v in sorted(self.group_size_histogram.items())},
            "merged_groups": self.merged_groups,
            "fallback_pages": self.fallback_pages,
        }


def _parse_policy(policy):
    if policy == "fail_job":
        return "fail_job", 0
    if policy == "identity_page":
        return "identity_page", 0
    if policy.startswith("retry_") and policy.endswith("_then_identity"):
        n = int(policy.split("_")[1])
        return "retry_then_identity", n
    raise DataError(f"unknown failure policy: {policy!r}")


def harmonize_dataset(dataset, agent, rules, mapping,
                      policy="retry_2_then_identity", workers=1):
    """Run agent -> validate_plan -> apply_plan over every page.

    Returns (harmonized LayoutDataset carrying the target taxonomy, JobReport).
    Pages are processed independently; results are assembled in input page
    order so the output is identical regardless of worker count.
    """
    kind, retries = _parse_policy(policy)
    report = JobReport()

    def process(page):
        if not page.annotations:
            return page, HarmonizedPage(page.image_id, [], {}), PageOutcome(page.image_id, "empty")
        attempts = 0
        last_error = ""
        for attempt in range(1 + (retries if kind == "retry_then_identity" else 0)):
            attempts += 1
            try:
                plan = agent.propose(page)
                harmonized = apply_plan(page, plan, rules)
                outcome = PageOutcome(
                    page.image_id, "ok",
                    groups=len(harmonized.annotations),
                    merges=sum(1 for s in harmonized.provenance.values() if len(s) > 1),
                    attempts=attempts,
                )
                return page, harmonized, outcome
            except Exception as exc:  # agent misbehavior is data, not a crash
                last_error = f"{type(exc).__name__}: {exc}"
        if kind == "fail_job":
            raise JobError(f"page {page.image_id} failed: {last_error}", page_id=page.image_id)
        plan = identity_plan(page, mapping)
        harmonized = apply_plan(page, plan, rules)
        outcome = PageOutcome(page.image_id, "fallback", groups=len(harmonized.annotations),
                              attempts=attempts, reason=last_error)
        return page, harmonized, outcome

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, dataset.pages))
    else:
        results = [process(p) for p in dataset.pages]

    new_pages = []
    for page, harmonized, outcome in results:
        report.outcomes.append(outcome)
        if outcome.status == "fallback":
            report.fallback_pages += 1
        for src_ids in harmonized.provenance.values():
            size = len(src_ids)
            report.group_size_histogram[size] = report.group_size_histogram.get(size, 0) + 1
            if size > 1:
                report.merged_groups += 1
        new_pages.append(
            PageRecord(
                image_id=page.image_id,
                width=page.width,
                height=page.height,
                image_path=page.image_path,
                annotations=harmonized.annotations,
            )
        )
    out = LayoutDataset(name=dataset.name, taxonomy=rules.target_taxonomy, pages=new_pages)
    return out, report
