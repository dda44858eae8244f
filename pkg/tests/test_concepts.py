"""Tests pour le module concepts."""

import json
from pathlib import Path
from typing import Any

import pytest

from degen_lab.concepts import load_concept_pool, pool_from_dict, pool_vocabulary
from degen_lab.exceptions import LabError, PoolError
from degen_lab.models import ConceptPool, FurnitureKind
from degen_lab.templates import template_vocabulary


def minimal_pool() -> dict[str, Any]:
    return {
        "rooms": ["kitchen"],
        "function_words": ["the"],
        "furniture": [{"id": "fridge", "kind": "container", "names": ["fridge", "icebox"]}],
        "concepts": [
            {"id": "milk", "names_id": ["milk"], "names_ood": ["dairy"], "goal": "fridge"}
        ],
    }


def test_shipped_pool_is_valid(pool: ConceptPool) -> None:
    """Test le pool livré: assez de concepts pour la difficulté hard."""
    assert len(pool.concepts) >= 7
    assert len(pool.rooms) >= 2
    assert pool.furniture_by_id("fridge").kind == FurnitureKind.CONTAINER
    for concept in pool.concepts:
        assert not set(concept.surface_names_id) & set(concept.surface_names_ood)


def test_pool_vocabulary_covers_templates(pool: ConceptPool) -> None:
    """Test que tous les mots des templates et de la grammaire sont dans le pool."""
    vocabulary = set(pool_vocabulary(pool))
    grammar = {"look", "go", "east", "west", "open", "take", "from", "put", "in", "on"}

    assert template_vocabulary() <= vocabulary
    assert grammar <= vocabulary


def test_pool_from_dict_minimal() -> None:
    """Test la construction d'un pool minimal."""
    pool = pool_from_dict(minimal_pool())

    assert pool.concept_by_id("milk").goal_location == "fridge"
    assert pool.furniture[0].name == "fridge"
    assert pool_vocabulary(pool) == ["milk", "dairy", "fridge", "icebox", "kitchen", "the"]


def test_overlapping_id_ood_names_rejected() -> None:
    """Test le refus de noms ID et OOD non disjoints."""
    data = minimal_pool()
    data["concepts"][0]["names_ood"] = ["milk"]

    with pytest.raises(PoolError, match="non disjoints"):
        pool_from_dict(data)


def test_unknown_goal_rejected() -> None:
    """Test le refus d'un emplacement cible inconnu."""
    data = minimal_pool()
    data["concepts"][0]["goal"] = "oven"

    with pytest.raises(PoolError, match="inconnu"):
        pool_from_dict(data)


def test_shared_surface_name_rejected() -> None:
    """Test le refus d'un mot partagé entre un concept et un meuble."""
    data = minimal_pool()
    data["concepts"][0]["names_ood"] = ["icebox"]

    with pytest.raises(PoolError, match="partagé"):
        pool_from_dict(data)


def test_pool_error_is_a_lab_error() -> None:
    """Test qu'un pool invalide lève une erreur du laboratoire, aussi ValueError."""
    data = minimal_pool()
    data["furniture"][0]["names"] = []

    with pytest.raises(PoolError, match="aucun nom") as excinfo:
        pool_from_dict(data)
    assert isinstance(excinfo.value, LabError)
    assert isinstance(excinfo.value, ValueError)


def test_load_pool_from_file(tmp_path: Path) -> None:
    """Test le chargement d'un pool depuis un fichier."""
    path = tmp_path / "pool.json"
    path.write_text(json.dumps(minimal_pool()), encoding="utf-8")

    assert load_concept_pool(path).rooms == ("kitchen",)
