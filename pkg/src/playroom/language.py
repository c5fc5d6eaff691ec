"""Grounded noun phrases and templated utterances.

A noun phrase names an instance using the class lexicon: the color adjective
appears only when the bare noun is ambiguous in the scene, and the determiner
is "the" exactly when the realized description matches a single instance.
Utterances carry half-open character spans for every referring slot so a
listener (or a test) can resolve each phrase back to instance ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from playroom.catalog import PALETTE
from playroom.errors import ParseError, UnknownColor, UnknownNoun, UnparseablePhrase
from playroom.world import Scene

_TEMPLATE_CHARS = set("abcdefghijklmnopqrstuvwxyz_#")


@dataclass(frozen=True)
class Lexicon:
    """class id -> noun, plus plural overrides for irregular nouns."""

    nouns: dict[str, str]
    irregular_plurals: dict[str, str] = field(default_factory=dict)

    def noun_of(self, class_id: str) -> str:
        try:
            return self.nouns[class_id]
        except KeyError:
            raise UnknownNoun(f"no noun for class {class_id!r}") from None

    def classes_of(self, noun: str) -> list[str]:
        return sorted(cid for cid, n in self.nouns.items() if n == noun)

    def plural(self, noun: str) -> str:
        if noun in self.irregular_plurals:
            return self.irregular_plurals[noun]
        head = noun.rsplit(" ", 1)[-1]
        prefix = noun[: len(noun) - len(head)]
        if head.endswith(("s", "x", "z", "ch", "sh")):
            return prefix + head + "es"
        if head.endswith("y") and len(head) > 1 and head[-2] not in "aeiou":
            return prefix + head[:-1] + "ies"
        return prefix + head + "s"

    def singular_of(self, word: str) -> str | None:
        """Invert plural(); None when the word is not a known plural."""
        for noun in set(self.nouns.values()):
            if self.plural(noun) == word:
                return noun
        return None


@dataclass(frozen=True)
class Reference:
    start: int
    end: int
    ids: tuple[int, ...]

    def to_doc(self) -> dict:
        return {"start": self.start, "end": self.end, "ids": list(self.ids)}

    @staticmethod
    def from_doc(doc: dict) -> "Reference":
        return Reference(doc["start"], doc["end"], tuple(doc["ids"]))


@dataclass(frozen=True)
class Utterance:
    text: str
    level: int
    concept: str
    references: tuple[Reference, ...] = ()

    def to_doc(self) -> dict:
        return {
            "text": self.text,
            "level": self.level,
            "concept": self.concept,
            "references": [r.to_doc() for r in self.references],
        }

    @staticmethod
    def from_doc(doc: dict) -> "Utterance":
        return Utterance(
            text=doc["text"],
            level=doc["level"],
            concept=doc["concept"],
            references=tuple(Reference.from_doc(r) for r in doc["references"]),
        )


@dataclass(frozen=True)
class SlotValue:
    """Realized text for one template slot; ids mark it as referring."""

    text: str
    ids: tuple[int, ...] = ()


def _noun_siblings(scene: Scene, lexicon: Lexicon, noun: str) -> list[int]:
    return sorted(
        inst.instance_id
        for inst in scene.instances
        if lexicon.noun_of(inst.class_id) == noun
    )


def _color_matches(scene: Scene, lexicon: Lexicon, noun: str, color: str) -> list[int]:
    return sorted(
        inst.instance_id
        for inst in scene.instances
        if lexicon.noun_of(inst.class_id) == noun
        and scene.catalog.get(inst.class_id).color == color
    )


def noun_phrase(scene: Scene, lexicon: Lexicon, instance_id: int) -> SlotValue:
    """Minimal distinguishing phrase: color only if needed, the/a by uniqueness."""
    inst = scene.instance(instance_id)
    cls = scene.catalog.get(inst.class_id)
    noun = lexicon.noun_of(inst.class_id)
    siblings = _noun_siblings(scene, lexicon, noun)
    if len(siblings) == 1:
        candidates = siblings
        body = noun
    else:
        candidates = _color_matches(scene, lexicon, noun, cls.color)
        body = f"{cls.color} {noun}"
    det = "the" if len(candidates) == 1 else "a"
    return SlotValue(text=f"{det} {body}", ids=(instance_id,))


def noun_phrase_nocolor(scene: Scene, lexicon: Lexicon, instance_id: int) -> SlotValue:
    """Color-free variant used when the sentence itself names the color."""
    inst = scene.instance(instance_id)
    noun = lexicon.noun_of(inst.class_id)
    siblings = _noun_siblings(scene, lexicon, noun)
    det = "the" if len(siblings) == 1 else "a"
    return SlotValue(text=f"{det} {noun}", ids=(instance_id,))


def bare_noun(scene: Scene, lexicon: Lexicon, instance_id: int) -> SlotValue:
    inst = scene.instance(instance_id)
    return SlotValue(text=lexicon.noun_of(inst.class_id), ids=(instance_id,))


def noun_phrase_group(
    scene: Scene, lexicon: Lexicon, noun: str, color: str | None = None
) -> SlotValue:
    """Plural definite over every member: "the balls", "the green balls"."""
    if color is None:
        ids = _noun_siblings(scene, lexicon, noun)
        body = lexicon.plural(noun)
    else:
        ids = _color_matches(scene, lexicon, noun, color)
        body = f"{color} {lexicon.plural(noun)}"
    return SlotValue(text=f"the {body}", ids=tuple(ids))


def realize(template: str, slots: dict[str, SlotValue], level: int, concept: str) -> Utterance:
    """Fill ``{name#variant}`` slots, recording spans of referring slots.

    The variant suffix is resolved by the caller (slots are already realized
    text); it remains in the template only to key the slot dict.
    """
    out: list[str] = []
    refs: list[Reference] = []
    pos = 0
    i = 0
    while i < len(template):
        ch = template[i]
        if ch != "{":
            out.append(ch)
            pos += 1
            i += 1
            continue
        j = template.index("}", i)
        token = template[i + 1 : j]
        if not set(token) <= _TEMPLATE_CHARS:
            raise ParseError(f"bad template slot {token!r}")
        try:
            value = slots[token]
        except KeyError:
            raise ParseError(f"unbound template slot {token!r}") from None
        out.append(value.text)
        if value.ids:
            refs.append(Reference(pos, pos + len(value.text), value.ids))
        pos += len(value.text)
        i = j + 1
    text = "".join(out)
    if text and text[0].isalpha() and template.endswith((".", "!", "?")):
        text = text[0].upper() + text[1:]
    return Utterance(text=text, level=level, concept=concept, references=tuple(refs))


@dataclass(frozen=True)
class ParsedPhrase:
    determiner: str | None
    color: str | None
    noun: str
    plural: bool


def parse_noun_phrase(text: str, lexicon: Lexicon) -> ParsedPhrase:
    """Split a phrase into determiner / color / noun; strict about vocabulary."""
    words = text.strip().strip(".!?,").lower().split()
    if not words:
        raise UnparseablePhrase("empty phrase")
    determiner = None
    if words[0] in ("the", "a", "an"):
        determiner = "a" if words[0] == "an" else words[0]
        words = words[1:]
    if not words:
        raise UnparseablePhrase(f"no noun in {text!r}")
    color = None
    if words[0] in PALETTE and len(words) > 1:
        color = words[0]
        words = words[1:]
    head = " ".join(words)
    known = set(lexicon.nouns.values())
    if head in known:
        return ParsedPhrase(determiner, color, head, plural=False)
    singular = lexicon.singular_of(head)
    if singular is not None:
        return ParsedPhrase(determiner, color, singular, plural=True)
    if words[0] in PALETTE:
        raise UnknownColor(f"color {words[0]!r} cannot stand alone in {text!r}")
    raise UnknownNoun(f"unknown noun {head!r} in {text!r}")


def resolve_noun_phrase(
    scene: Scene,
    lexicon: Lexicon,
    text: str,
    pointing: int | None = None,
) -> tuple[int, ...]:
    """Map a phrase to instance ids; an indefinite ambiguous phrase defers to
    the pointing target when one is given."""
    parsed = parse_noun_phrase(text, lexicon)
    if parsed.color is None:
        candidates = _noun_siblings(scene, lexicon, parsed.noun)
    else:
        candidates = _color_matches(scene, lexicon, parsed.noun, parsed.color)
    if not candidates:
        raise UnknownNoun(f"nothing matches {text!r}")
    if parsed.plural:
        return tuple(candidates)
    if len(candidates) == 1:
        return (candidates[0],)
    if pointing is not None and pointing in candidates:
        return (pointing,)
    if parsed.determiner == "the":
        raise UnparseablePhrase(f"{text!r} is definite but matches {len(candidates)}")
    return tuple(candidates)
