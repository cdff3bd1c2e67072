import pytest

from docharmonize.dataset_model import Annotation, BBox, LayoutDataset, PageRecord
from docharmonize.errors import DataError, RemapError
from docharmonize.taxonomy import (
    Taxonomy,
    TaxonomyMapping,
    builtin_heron_remap,
    builtin_target_taxonomy,
    builtin_unstructured_remap,
    remap_dataset,
)

HERON_CATEGORIES = [
    "Caption", "Checkbox-Selected", "Checkbox-Unselected", "Code",
    "Document Index", "Footnote", "Form", "Formula", "Key-Value Region",
    "List-item", "Page-footer", "Page-header", "Picture", "Section-header",
    "Table", "Text", "Title",
]


class TestTargetTaxonomy:
    def test_seventeen_categories(self):
        t = builtin_target_taxonomy()
        assert len(t) == 17
        assert "figure_caption" in t and "list_item" in t

    def test_membership(self):
        t = builtin_target_taxonomy()
        assert "paragraph" in t
        assert "Footnote" not in t

    def test_exact_order(self):
        assert builtin_target_taxonomy().names == (
            "paragraph", "subheading", "title", "table", "image",
            "figure_caption", "list_item", "formulas", "page_header",
            "page_footer", "page_number", "checkbox", "checkbox_checked",
            "form", "form_key_values", "code_snippet", "other",
        )


class TestHeronRemap:
    def test_covers_all_seventeen(self):
        mapping = builtin_heron_remap()
        assert sorted(mapping.entries) == sorted(HERON_CATEGORIES)

    def test_known_pairs(self):
        entries = builtin_heron_remap().entries
        assert entries["Text"] == "paragraph"
        assert entries["Section-header"] == "subheading"
        assert entries["Key-Value Region"] == "form_key_values"

    def test_orphans_go_to_other(self):
        entries = builtin_heron_remap().entries
        assert entries["Footnote"] == "other"
        assert entries["Document Index"] == "other"

    def test_image_within_target(self):
        target = builtin_target_taxonomy()
        assert all(v in target for v in builtin_heron_remap().entries.values())


def test_unstructured_remap_radio_buttons_to_other():
    entries = builtin_unstructured_remap().entries
    assert len(entries) == 16
    assert entries["radio_button"] == "other"
    assert entries["radio_button_checked"] == "other"


def make_dataset(categories_per_ann, taxonomy_names):
    anns = [
        Annotation(id=i + 1, bbox=BBox(0, i * 10, 50, i * 10 + 8), category=c)
        for i, c in enumerate(categories_per_ann)
    ]
    page = PageRecord(image_id=1, width=100, height=100, annotations=anns)
    return LayoutDataset(name="d", taxonomy=Taxonomy(tuple(taxonomy_names)), pages=[page])


class TestRemapDataset:
    def test_section_header_to_subheading(self):
        ds = make_dataset(["Section-header"], HERON_CATEGORIES)
        out, report = remap_dataset(ds, builtin_heron_remap())
        assert out.pages[0].annotations[0].category == "subheading"
        assert report.pair_counts[("Section-header", "subheading")] == 1

    def test_map_to_policy(self):
        mapping = TaxonomyMapping(
            source="s", target="target", entries={"Text": "paragraph"},
            unmapped_policy="map_to:other",
            target_taxonomy=builtin_target_taxonomy(),
        )
        ds = make_dataset(["Footnote"], ["Text", "Footnote"])
        out, _ = remap_dataset(ds, mapping)
        assert out.pages[0].annotations[0].category == "other"

    def test_identity_mapping_is_noop(self, identity_mapping):
        ds = make_dataset(["paragraph", "table"], builtin_target_taxonomy().names)
        out, _ = remap_dataset(ds, identity_mapping)
        assert [a.category for a in out.pages[0].annotations] == ["paragraph", "table"]
        assert [a.bbox for a in out.pages[0].annotations] == \
            [a.bbox for a in ds.pages[0].annotations]

    def test_error_policy_raises(self):
        mapping = TaxonomyMapping(
            source="s", target="target", entries={"Text": "paragraph"},
            target_taxonomy=builtin_target_taxonomy(),
        )
        ds = make_dataset(["Footnote"], ["Text", "Footnote"])
        with pytest.raises(RemapError, match="Footnote"):
            remap_dataset(ds, mapping)

    def test_drop_policy_counts_drops(self):
        mapping = TaxonomyMapping(
            source="s", target="target", entries={"Text": "paragraph"},
            unmapped_policy="drop",
            target_taxonomy=builtin_target_taxonomy(),
        )
        ds = make_dataset(["Text", "Footnote"], ["Text", "Footnote"])
        out, report = remap_dataset(ds, mapping)
        assert out.annotation_count == 1
        assert report.dropped == {"Footnote": 1}

    def test_count_and_geometry_preserved(self):
        ds = make_dataset(["Text", "Table", "Title"], HERON_CATEGORIES)
        out, _ = remap_dataset(ds, builtin_heron_remap())
        assert out.annotation_count == ds.annotation_count
        for before, after in zip(ds.pages[0].annotations, out.pages[0].annotations):
            assert before.bbox == after.bbox


class TestMappingValidation:
    def test_rejects_targets_outside_taxonomy(self):
        with pytest.raises(DataError):
            TaxonomyMapping(
                source="s", target="t", entries={"x": "not_a_category"},
                target_taxonomy=builtin_target_taxonomy(),
            )

    def test_rejects_bad_policy(self):
        with pytest.raises(DataError):
            TaxonomyMapping(source="s", target="t", entries={}, unmapped_policy="ignore")

    def test_taxonomy_rejects_duplicates(self):
        with pytest.raises(DataError):
            Taxonomy(("a", "a"))

    def test_mapping_json_round_trip(self):
        mapping = builtin_heron_remap()
        clone = TaxonomyMapping.from_json(
            mapping.to_json(), target_taxonomy=builtin_target_taxonomy()
        )
        assert clone.entries == mapping.entries
        assert clone.unmapped_policy == mapping.unmapped_policy
