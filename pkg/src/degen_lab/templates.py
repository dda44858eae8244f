"""Familles de templates d'observation et extraction des faits.

Chaque phrase exprime exactement un fait. Les familles expriment les mêmes faits
avec des formulations différentes, ce qui permet de les réanalyser pour vérifier
l'équivalence des faits entre familles.
"""

import re
from functools import lru_cache

from .exceptions import UnknownTemplateSetError

Fact = tuple[str, ...]
FactSet = frozenset[Fact]

# Champs de chaque type de fait, dans l'ordre du tuple
FACT_FIELDS: dict[str, tuple[str, ...]] = {
    "room": ("room",),
    "exit": ("direction",),
    "container": ("name", "status"),
    "supporter": ("name",),
    "on": ("obj", "holder"),
    "in": ("obj", "holder"),
    "floor": ("obj",),
    "carrying": ("obj",),
}

TEMPLATE_SETS: dict[int, dict[str, str]] = {
    0: {
        "room": "You've entered a {room}.",
        "exit": "There is an exit to the {direction}.",
        "container": "You can see a {status} {name}.",
        "supporter": "You see a {name}.",
        "on": "On the {holder} you can make out a {obj}.",
        "in": "Inside the {holder} you can make out a {obj}.",
        "floor": "There is a {obj} on the floor.",
        "carrying": "You are carrying a {obj}.",
    },
    1: {
        "room": "This room is the {room}.",
        "exit": "A doorway leads {direction}.",
        "container": "The {name} here is {status}.",
        "supporter": "A {name} stands here.",
        "on": "A {obj} rests on the {holder}.",
        "in": "The {holder} holds a {obj}.",
        "floor": "A {obj} lies on the ground.",
        "carrying": "In your hands is a {obj}.",
    },
    2: {
        "room": "You find yourself in the {room}.",
        "exit": "You could head {direction} from here.",
        "container": "Nearby is a {name}, currently {status}.",
        "supporter": "There stands a {name}.",
        "on": "Sitting on the {holder} is a {obj}.",
        "in": "Stored in the {holder} is a {obj}.",
        "floor": "Someone left a {obj} on the floor.",
        "carrying": "You hold a {obj}.",
    },
}

STATUS_WORDS = ("open", "closed")

_FIELD_RE = re.compile(r"\{(\w+)\}")


def template_set(template_set_id: int) -> dict[str, str]:
    """Retourne une famille de templates.

    Raises:
        UnknownTemplateSetError: Si l'identifiant n'existe pas
    """
    try:
        return TEMPLATE_SETS[template_set_id]
    except KeyError:
        raise UnknownTemplateSetError(template_set_id) from None


def alternate_template_sets(template_set_id: int) -> list[int]:
    """Familles disponibles autres que celle donnée, par ordre croissant."""
    template_set(template_set_id)
    return sorted(set_id for set_id in TEMPLATE_SETS if set_id != template_set_id)


def render_fact(fact: Fact, template_set_id: int) -> str:
    """Rend un fait en une phrase."""
    kind, *values = fact
    template = template_set(template_set_id)[kind]
    return template.format(**dict(zip(FACT_FIELDS[kind], values, strict=True)))


def render_facts(facts: list[Fact], template_set_id: int) -> str:
    """Rend une liste ordonnée de faits en texte d'observation."""
    return " ".join(render_fact(fact, template_set_id) for fact in facts)


@lru_cache(maxsize=None)
def _compiled_patterns(template_set_id: int) -> tuple[tuple[str, re.Pattern[str]], ...]:
    patterns = []
    for kind, template in template_set(template_set_id).items():
        parts = _FIELD_RE.split(template)
        regex = ""
        for index, part in enumerate(parts):
            # split() alterne littéral / nom de champ
            regex += f"(?P<{part}>[a-z]+)" if index % 2 else re.escape(part)
        patterns.append((kind, re.compile(regex)))
    return tuple(patterns)


def parse_observation(text: str, template_set_id: int) -> FactSet:
    """Extrait l'ensemble des faits d'un texte rendu avec une famille donnée.

    Raises:
        ValueError: Si une phrase ne correspond à aucun template de la famille
    """
    facts: set[Fact] = set()
    for sentence in re.findall(r"[^.]+\.", text):
        sentence = sentence.strip()
        for kind, pattern in _compiled_patterns(template_set_id):
            match = pattern.fullmatch(sentence)
            if match:
                facts.add((kind, *(match.group(name) for name in FACT_FIELDS[kind])))
                break
        else:
            raise ValueError(f"Phrase non reconnue (famille {template_set_id}): {sentence!r}")
    return frozenset(facts)


def template_vocabulary() -> set[str]:
    """Mots littéraux de tous les templates (hors champs), en minuscules."""
    words: set[str] = set(STATUS_WORDS)
    for templates in TEMPLATE_SETS.values():
        for template in templates.values():
            literal = _FIELD_RE.sub(" ", template)
            words.update(re.findall(r"[a-z0-9]+", literal.lower()))
    return words
