"""Noun phrase realization, parsing, and round-trip resolution tests."""

from __future__ import annotations

import pytest

from playroom.errors import ParseError, UnknownColor, UnknownNoun, UnparseablePhrase
from playroom.language import (
    Lexicon,
    Reference,
    SlotValue,
    Utterance,
    bare_noun,
    noun_phrase,
    noun_phrase_group,
    noun_phrase_nocolor,
    parse_noun_phrase,
    realize,
    resolve_noun_phrase,
)
from playroom.lessons import default_registry
from playroom.world import generate_scene, spawn_object


@pytest.fixture(scope="module")
def lexicon():
    return default_registry().lexicon


def _lab(catalog):
    scene = generate_scene(catalog, n_interactable=0, seed=3)
    return scene, {inst.class_id: inst.instance_id for inst in scene.instances}


# -- plural morphology ---------------------------------------------------------


def test_plural_rules():
    lex = Lexicon(nouns={}, irregular_plurals={"sheep": "sheep"})
    assert lex.plural("ball") == "balls"
    assert lex.plural("box") == "boxes"
    assert lex.plural("brush") == "brushes"
    assert lex.plural("pony") == "ponies"
    assert lex.plural("toy") == "toys"  # vowel before the y
    assert lex.plural("teddy bear") == "teddy bears"  # head word only
    assert lex.plural("sheep") == "sheep"


def test_singular_of_inverts_plural(lexicon):
    for noun in set(lexicon.nouns.values()):
        assert lexicon.singular_of(lexicon.plural(noun)) == noun
    assert lexicon.singular_of("unicorns") is None


def test_unknown_class_has_no_noun(lexicon):
    with pytest.raises(UnknownNoun):
        lexicon.noun_of("spaceship")


# -- realization ----------------------------------------------------------------


def test_noun_phrase_picks_minimal_description(catalog, lexicon):
    scene, ids = _lab(catalog)
    # Sole table in the room: bare noun, definite.
    assert noun_phrase(scene, lexicon, ids["table"]).text == "the table"
    red = spawn_object(scene, catalog.get("ball_red"), (4, 4))
    green = spawn_object(scene, catalog.get("ball_green"), (7, 4))
    # Two balls of different colors: the adjective restores uniqueness.
    assert noun_phrase(scene, lexicon, red).text == "the red ball"
    assert noun_phrase(scene, lexicon, green).text == "the green ball"
    assert noun_phrase_nocolor(scene, lexicon, red).text == "a ball"
    assert bare_noun(scene, lexicon, red).text == "ball"
    # A second red ball defeats the color adjective: indefinite.
    red2 = spawn_object(scene, catalog.get("ball_red"), (4, 7))
    assert noun_phrase(scene, lexicon, red).text == "a red ball"
    assert noun_phrase(scene, lexicon, red2).text == "a red ball"


def test_noun_phrase_group_collects_ids(catalog, lexicon):
    scene, _ = _lab(catalog)
    a = spawn_object(scene, catalog.get("ball_red"), (4, 4))
    b = spawn_object(scene, catalog.get("ball_green"), (7, 4))
    c = spawn_object(scene, catalog.get("ball_red"), (4, 7))
    group = noun_phrase_group(scene, lexicon, "ball")
    assert group.text == "the balls"
    assert set(group.ids) == {a, b, c}
    reds = noun_phrase_group(scene, lexicon, "ball", color="red")
    assert reds.text == "the red balls"
    assert set(reds.ids) == {a, c}


def test_realize_fills_slots_and_tracks_spans():
    slots = {
        "fig": SlotValue("the red ball", ids=(12,)),
        "ground": SlotValue("the table", ids=(10,)),
    }
    utt = realize("{fig} is on {ground}.", slots, level=2, concept="on")
    assert utt.text == "The red ball is on the table."
    assert utt.level == 2
    assert utt.concept == "on"
    assert len(utt.references) == 2
    first, second = utt.references
    # Spans cover the realized slot text (the first is capitalized in place).
    assert utt.text[first.start : first.end] == "The red ball"
    assert utt.text[second.start : second.end] == "the table"
    assert first.ids == (12,)
    assert second.ids == (10,)


def test_realize_only_capitalizes_sentences():
    bare = realize("{fig}", {"fig": SlotValue("ball")}, level=0, concept="ball")
    assert bare.text == "ball"
    assert bare.references == ()


def test_realize_rejects_bad_templates():
    with pytest.raises(ParseError):
        realize("{fig!}", {"fig": SlotValue("x")}, level=0, concept="c")
    with pytest.raises(ParseError):
        realize("{missing}", {"fig": SlotValue("x")}, level=0, concept="c")


def test_utterance_doc_round_trip():
    utt = Utterance(
        text="The ball is in the box.",
        level=2,
        concept="in",
        references=(Reference(0, 8, (12,)), Reference(15, 22, (13,))),
    )
    assert Utterance.from_doc(utt.to_doc()) == utt


# -- parsing ----------------------------------------------------------------------


def test_parse_noun_phrase_forms(lexicon):
    parsed = parse_noun_phrase("the red ball", lexicon)
    assert (parsed.determiner, parsed.color, parsed.noun, parsed.plural) == (
        "the", "red", "ball", False,
    )
    assert parse_noun_phrase("a ball", lexicon).determiner == "a"
    assert parse_noun_phrase("an easel", lexicon).determiner == "a"
    assert parse_noun_phrase("Balls", lexicon).plural
    assert parse_noun_phrase("the green balls.", lexicon) == parse_noun_phrase(
        "The Green Balls", lexicon
    )
    multi = parse_noun_phrase("the toy car", lexicon)
    assert multi.noun == "toy car"
    chest = parse_noun_phrase("toy chests", lexicon)
    assert chest.noun == "toy chest" and chest.plural


def test_parse_noun_phrase_rejects_junk(lexicon):
    with pytest.raises(UnparseablePhrase):
        parse_noun_phrase("   ", lexicon)
    with pytest.raises(UnparseablePhrase):
        parse_noun_phrase("the", lexicon)
    with pytest.raises(UnknownNoun):
        parse_noun_phrase("the purple dinosaur", lexicon)
    with pytest.raises(UnknownColor):
        parse_noun_phrase("the red", lexicon)


def test_resolve_noun_phrase(catalog, lexicon):
    scene, ids = _lab(catalog)
    red = spawn_object(scene, catalog.get("ball_red"), (4, 4))
    red2 = spawn_object(scene, catalog.get("ball_red"), (7, 4))
    assert resolve_noun_phrase(scene, lexicon, "the table") == (ids["table"],)
    assert set(resolve_noun_phrase(scene, lexicon, "a red ball")) == {red, red2}
    assert set(resolve_noun_phrase(scene, lexicon, "the balls")) == {red, red2}
    # A pointing gesture disambiguates an indefinite phrase.
    assert resolve_noun_phrase(scene, lexicon, "a red ball", pointing=red2) == (red2,)
    with pytest.raises(UnparseablePhrase):
        resolve_noun_phrase(scene, lexicon, "the red ball")  # two match
    with pytest.raises(UnknownNoun):
        resolve_noun_phrase(scene, lexicon, "the duck")  # none in this room


# -- round trips over generated scenes ---------------------------------------------


def test_noun_phrases_round_trip_across_scenes(catalog, lexicon):
    checked = 0
    for seed in range(20):
        scene = generate_scene(catalog, seed=seed)
        for inst in scene.instances:
            phrase = noun_phrase(scene, lexicon, inst.instance_id)
            resolved = resolve_noun_phrase(scene, lexicon, phrase.text)
            if phrase.text.startswith("the "):
                assert resolved == (inst.instance_id,), phrase.text
            else:
                assert inst.instance_id in resolved, phrase.text
            checked += 1
    assert checked >= 200


def test_group_phrases_round_trip_across_scenes(catalog, lexicon):
    for seed in range(10):
        scene = generate_scene(catalog, seed=seed)
        nouns = {lexicon.noun_of(inst.class_id) for inst in scene.instances}
        for noun in nouns:
            group = noun_phrase_group(scene, lexicon, noun)
            resolved = resolve_noun_phrase(scene, lexicon, group.text)
            assert set(resolved) == set(group.ids)
