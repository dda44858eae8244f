"""Fixtures pytest pour les tests."""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from degen_lab.concepts import load_concept_pool
from degen_lab.config import AgentConfig, ExperimentConfig
from degen_lab.engine import generate_game, scripted_cooccurrence_spec
from degen_lab.models import ConceptPool, Difficulty, EncoderKind, GameSpec, PerturbMode, VocabMode
from degen_lab.textenc import EmbeddingEncoder, EmbeddingTable, EncoderParams, synth_pretrain


@pytest.fixture(scope="session")
def pool() -> ConceptPool:
    """Pool de concepts livré avec le paquet."""
    return load_concept_pool()


@pytest.fixture
def easy_spec(pool: ConceptPool) -> GameSpec:
    """Partie facile (1 objet, 1 cible, 1 pièce)."""
    return generate_game(Difficulty.EASY, 1, pool)


@pytest.fixture
def medium_spec(pool: ConceptPool) -> GameSpec:
    """Partie moyenne."""
    return generate_game(Difficulty.MEDIUM, 3, pool)


@pytest.fixture
def scripted_spec(pool: ConceptPool) -> GameSpec:
    """Partie scriptée où « mug » et « cupboard » co-occurrent dans l'action récompensée."""
    return scripted_cooccurrence_spec(pool)


@pytest.fixture(scope="session")
def small_table(pool: ConceptPool) -> EmbeddingTable:
    """Table synthétique de petite dimension (ne pas modifier: copier avant usage)."""
    return synth_pretrain(pool, 6, 1234)


@pytest.fixture
def embedding_encoder(small_table: EmbeddingTable) -> EmbeddingEncoder:
    """Encodeur plongements + GRU entraînable, h = 5."""
    params = EncoderParams.initialise(
        small_table.copy(), 5, np.random.default_rng(0), frozen=False
    )
    return EmbeddingEncoder(params)


@pytest.fixture
def fast_agent_config() -> AgentConfig:
    """Hyperparamètres d'agent pour des tests rapides."""
    return AgentConfig(batch_size=4, warmup_transitions=4, replay_capacity=200, lr=1e-2)


@pytest.fixture
def tiny_config(tmp_path: Path) -> ExperimentConfig:
    """Expérience minuscule: 2 graines, 3 épisodes, parties faciles."""
    return ExperimentConfig(
        difficulty=Difficulty.EASY,
        n_train_games=2,
        n_eval_games_id=2,
        n_eval_games_ood=2,
        episodes=3,
        max_steps=8,
        n_runs=2,
        encoders=[EncoderKind.HASH, EncoderKind.EMBEDDING_FROZEN, EncoderKind.EMBEDDING_FINETUNED],
        perturb_modes=[PerturbMode.NONE, PerturbMode.PARAPHRASE, PerturbMode.LEXICAL],
        agent=AgentConfig(batch_size=4, warmup_transitions=4, replay_capacity=100),
        embedding_dim=6,
        hidden_size=5,
        out_dir=tmp_path / "results",
        max_workers=2,
    )


@pytest.fixture
def ood_spec(pool: ConceptPool) -> GameSpec:
    """Partie moyenne au vocabulaire OOD (même graine que medium_spec)."""
    return generate_game(Difficulty.MEDIUM, 3, pool, vocab_mode=VocabMode.OOD)


@pytest.fixture
def solved_spec(scripted_spec: GameSpec) -> GameSpec:
    """Partie scriptée dont chaque objet est déjà à destination, meubles ouverts."""
    destination = {goal.object_name: goal.destination for goal in scripted_spec.goals}
    return replace(
        scripted_spec,
        furniture=tuple(replace(item, initially_open=True) for item in scripted_spec.furniture),
        objects=tuple(
            replace(obj, location=destination.get(obj.name, obj.location))
            for obj in scripted_spec.objects
        ),
    )
