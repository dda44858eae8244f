"""Chargement et validation du pool de concepts."""

import json
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .exceptions import PoolError
from .logger import logger
from .models import Concept, ConceptPool, FurnitureConcept, FurnitureKind

DEFAULT_POOL_RESOURCE = "concepts.json"


def _read_pool_json(path: Optional[Path]) -> dict[str, Any]:
    """Lit le JSON du pool (fichier fourni ou ressource embarquée)."""
    if path is not None:
        with open(path, encoding="utf-8") as f:
            data: dict[str, Any] = json.load(f)
        return data

    resource = resources.files("degen_lab").joinpath("data", DEFAULT_POOL_RESOURCE)
    with resource.open("r", encoding="utf-8") as f:
        data = json.load(f)
    return data


def pool_from_dict(data: dict[str, Any]) -> ConceptPool:
    """Construit et valide un ConceptPool depuis sa forme JSON.

    Raises:
        PoolError: Si un invariant du pool est violé
    """
    furniture = tuple(
        FurnitureConcept(
            id=item["id"],
            kind=FurnitureKind(item["kind"]),
            names=tuple(item["names"]),
        )
        for item in data.get("furniture", [])
    )
    concepts = tuple(
        Concept(
            id=item["id"],
            surface_names_id=tuple(item["names_id"]),
            surface_names_ood=tuple(item["names_ood"]),
            goal_location=item["goal"],
        )
        for item in data.get("concepts", [])
    )
    pool = ConceptPool(
        concepts=concepts,
        furniture=furniture,
        rooms=tuple(data.get("rooms", [])),
        function_words=tuple(data.get("function_words", [])),
    )
    validate_pool(pool)
    return pool


def validate_pool(pool: ConceptPool) -> None:
    """Vérifie les invariants des concepts et l'unicité des noms de surface.

    Raises:
        PoolError: Au premier invariant violé
    """
    furniture_ids = {item.id for item in pool.furniture}

    for concept in pool.concepts:
        if not concept.surface_names_id or not concept.surface_names_ood:
            raise PoolError(f"Concept {concept.id}: listes de noms vides")
        if set(concept.surface_names_id) & set(concept.surface_names_ood):
            raise PoolError(f"Concept {concept.id}: noms ID et OOD non disjoints")
        if concept.goal_location not in furniture_ids:
            raise PoolError(
                f"Concept {concept.id}: emplacement cible inconnu {concept.goal_location!r}"
            )

    for item in pool.furniture:
        if not item.names:
            raise PoolError(f"Meuble {item.id}: aucun nom")

    # Un même mot ne peut désigner deux choses (sinon les actions deviennent ambiguës)
    seen: dict[str, str] = {}
    surfaces: list[tuple[str, str]] = []
    for concept in pool.concepts:
        surfaces += [(name, f"concept {concept.id}") for name in concept.surface_names_id]
        surfaces += [(name, f"concept {concept.id}") for name in concept.surface_names_ood]
    for item in pool.furniture:
        surfaces += [(name, f"meuble {item.id}") for name in item.names]
    surfaces += [(name, "pièce") for name in pool.rooms]
    surfaces += [(name, "mot-outil") for name in pool.function_words]

    for name, owner in surfaces:
        if not name.isalpha() or name != name.lower():
            raise PoolError(f"Nom de surface invalide {name!r} ({owner})")
        if name in seen and seen[name] != owner:
            raise PoolError(f"Nom {name!r} partagé entre {seen[name]} et {owner}")
        seen[name] = owner


def load_concept_pool(path: Optional[Path] = None) -> ConceptPool:
    """Charge le pool de concepts (par défaut celui livré avec le paquet).

    Args:
        path: Fichier JSON optionnel remplaçant le pool embarqué

    Returns:
        Pool validé
    """
    pool = pool_from_dict(_read_pool_json(path))
    logger.debug(
        f"Pool chargé: {len(pool.concepts)} concepts, {len(pool.furniture)} meubles, "
        f"{len(pool.rooms)} pièces"
    )
    return pool


def pool_vocabulary(pool: ConceptPool) -> list[str]:
    """Liste ordonnée de tous les mots connus du pool (concepts, meubles, pièces, mots-outils)."""
    words: list[str] = []
    for concept in pool.concepts:
        words += list(concept.surface_names_id) + list(concept.surface_names_ood)
    for item in pool.furniture:
        words += list(item.names)
    words += list(pool.rooms)
    words += list(pool.function_words)
    return list(dict.fromkeys(words))
