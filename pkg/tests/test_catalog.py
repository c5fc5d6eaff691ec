"""Catalog schema validation, role checks, and filtered sampling."""

from __future__ import annotations

import json

import pytest

from playroom.catalog import (
    PALETTE,
    Category,
    Shape,
    class_counts,
    default_catalog,
    is_interactable,
    is_static,
    load_catalog,
    parse_catalog,
    sample_class,
)
from playroom.errors import EmptyFilter, ParseError, SchemaError
from playroom.rng import Rng

_COLORS = sorted(PALETTE)


def make_class(i: int, category: str, **overrides) -> dict:
    """A synthetic valid class record; category decides the default flags."""
    interactable = category == "Interactable"
    doc = {
        "class_id": f"{category.lower()}_{i:03d}",
        "category": category,
        "shape": "Box",
        "extents": [0.2 + (i % 5) * 0.1, 0.2 + (i % 3) * 0.1, 0.1 + (i % 4) * 0.1],
        "color": _COLORS[i % len(_COLORS)],
        "mass": 0.1 + i % 7,
        "graspable": interactable,
        "is_container": False,
        "is_surface": not interactable,
    }
    doc.update(overrides)
    return doc


def synthetic_catalog_doc(n_static: int = 89, n_interactable: int = 243) -> dict:
    classes = [make_class(i, "Static") for i in range(n_static)]
    classes += [make_class(i, "Interactable") for i in range(n_interactable)]
    # Role coverage: one container among the interactables.
    classes[n_static]["shape"] = "OpenBox"
    classes[n_static]["is_container"] = True
    classes[n_static]["graspable"] = False
    return {"version": "synthetic-1", "classes": classes}


def test_paper_scale_catalog_accepted():
    catalog = parse_catalog(synthetic_catalog_doc())
    assert class_counts(catalog) == (89, 243)
    assert len(catalog.classes) == 332


@pytest.mark.parametrize(
    "override",
    [
        {"category": "Furniture"},
        {"shape": "Cone"},
        {"extents": [1.0, 1.0]},
        {"extents": [1.0, -0.2, 1.0]},
        {"color": "mauve"},
        {"mass": 0},
        {"graspable": "yes"},
        {"is_container": True},  # container with Box shape
        {"nonsense": 1},
    ],
)
def test_violating_333rd_class_rejected(override):
    doc = synthetic_catalog_doc()
    bad = make_class(999, "Interactable")
    bad.update(override)
    doc["classes"].append(bad)
    with pytest.raises(SchemaError):
        parse_catalog(doc)


def test_static_graspable_rejected():
    doc = synthetic_catalog_doc()
    doc["classes"].append(make_class(999, "Static", graspable=True))
    with pytest.raises(SchemaError):
        parse_catalog(doc)


def test_missing_field_rejected():
    doc = synthetic_catalog_doc()
    bad = make_class(999, "Interactable")
    del bad["mass"]
    doc["classes"].append(bad)
    with pytest.raises(SchemaError):
        parse_catalog(doc)


def test_duplicate_class_id_rejected():
    doc = synthetic_catalog_doc()
    doc["classes"].append(dict(doc["classes"][0]))
    with pytest.raises(SchemaError, match="duplicate"):
        parse_catalog(doc)


def test_role_checks():
    only_static = {
        "version": "x",
        "classes": [make_class(0, "Static")],
    }
    with pytest.raises(SchemaError, match="container"):
        parse_catalog(only_static)
    no_surface = synthetic_catalog_doc()
    for cls in no_surface["classes"]:
        if cls["category"] == "Static":
            cls["is_surface"] = False
    with pytest.raises(SchemaError, match="surface"):
        parse_catalog(no_surface)


def test_non_catalog_documents_rejected():
    with pytest.raises(ParseError):
        parse_catalog([])
    with pytest.raises(SchemaError):
        parse_catalog({"version": "x", "classes": [], "extra": 1})
    with pytest.raises(ParseError):
        parse_catalog({"version": "x", "classes": "nope"})
    with pytest.raises(SchemaError):
        parse_catalog({"version": "", "classes": []})


def test_load_catalog_from_file(tmp_path):
    path = tmp_path / "cat.json"
    path.write_text(json.dumps(synthetic_catalog_doc()), encoding="utf-8")
    assert len(load_catalog(path).classes) == 332
    path.write_text("{broken", encoding="utf-8")
    with pytest.raises(ParseError):
        load_catalog(path)
    with pytest.raises(ParseError):
        load_catalog(tmp_path / "absent.json")


def test_default_catalog_shape():
    catalog = default_catalog()
    static, interactable = class_counts(catalog)
    assert (static, interactable) == (6, 18)
    assert any(c.is_container for c in catalog.classes)
    assert any(is_static(c) and c.is_surface for c in catalog.classes)
    assert any(is_interactable(c) and c.graspable for c in catalog.classes)


def test_catalog_lookup():
    catalog = default_catalog()
    first = catalog.classes[0]
    assert catalog.get(first.class_id) is first
    assert first.class_id in catalog
    with pytest.raises(SchemaError):
        catalog.get("no_such_class")


def test_color_rgb_and_volume():
    catalog = default_catalog()
    for cls in catalog.classes:
        assert cls.color_rgb == PALETTE[cls.color]
        ex, ey, ez = cls.extents
        assert cls.volume == pytest.approx(ex * ey * ez)


def test_sample_class_single_draw_and_determinism():
    catalog = default_catalog()
    a, b = Rng(77), Rng(77)
    picked = sample_class(catalog, a, is_interactable)
    b.next_u64()
    assert a.state == b.state  # exactly one draw, filter notwithstanding
    assert picked.category is Category.INTERACTABLE
    assert sample_class(catalog, Rng(77), is_interactable) is picked


def test_sample_class_empty_filter():
    catalog = default_catalog()
    with pytest.raises(EmptyFilter):
        sample_class(catalog, Rng(0), lambda c: c.class_id == "unicorn")


def test_sample_class_covers_all_matches():
    catalog = default_catalog()
    rng = Rng(5)
    names = {sample_class(catalog, rng, is_static).class_id for _ in range(300)}
    expected = {c.class_id for c in catalog.classes if is_static(c)}
    assert names == expected


def test_shapes_cover_enum():
    catalog = default_catalog()
    assert {c.shape for c in catalog.classes} == set(Shape)
