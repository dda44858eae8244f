"""Tests pour le module agent."""

from collections.abc import Mapping
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from degen_lab.agent import (
    DRRNAgent,
    QNetwork,
    ReplayBuffer,
    load_checkpoint,
    play_episode,
    replay_episode,
    save_checkpoint,
    select_action,
    td_loss_and_grads,
    td_target,
)
from degen_lab.config import AgentConfig
from degen_lab.engine import GameEnv, oracle_solve
from degen_lab.exceptions import CheckpointError, DimensionMismatchError, EmptyInputError
from degen_lab.models import GameSpec, PolicyMode, Transition
from degen_lab.numcore import Array, grad_check, squared_td_loss
from degen_lab.textenc import (
    UNK_TOKEN,
    EmbeddingEncoder,
    EmbeddingTable,
    EncoderParams,
    HashEncoder,
)


def transition(index: int, done: bool = False, reward: float = 0.0) -> Transition:
    return Transition(
        obs_text=f"obs {index}",
        action_text="look",
        reward=reward,
        next_obs_text=f"obs {index + 1}",
        next_admissible_actions=() if done else ("look", "take mug"),
        done=done,
    )


def tiny_encoder(seed: int) -> EmbeddingEncoder:
    """Encodeur minuscule (d = 3, h = 2) pour les vérifications de gradient."""
    rng = np.random.default_rng(seed)
    tokens = ["you", "see", "a", "mug", "take", "open", "cupboard", UNK_TOKEN]
    table = EmbeddingTable(
        vocab={token: i for i, token in enumerate(tokens)},
        matrix=rng.standard_normal((len(tokens), 3)),
        unk_row=len(tokens) - 1,
    )
    return EmbeddingEncoder(EncoderParams.initialise(table, 2, rng, frozen=False))


def train(agent: DRRNAgent, spec: GameSpec, episodes: int) -> None:
    env = GameEnv(spec)
    for episode in range(episodes):
        play_episode(env, agent, PolicyMode.SAMPLE, learn=True, episode=episode)


@pytest.mark.parametrize("seed", range(100))
def test_replay_buffer_fifo(seed: int) -> None:
    """Test l'éviction FIFO et la borne de capacité."""
    rng = np.random.default_rng(seed)
    capacity = int(rng.integers(1, 20))
    pushed = int(rng.integers(0, 50))
    buffer = ReplayBuffer(capacity, np.random.default_rng(seed))
    for i in range(pushed):
        buffer.push(transition(i))

    assert len(buffer) == min(pushed, capacity)
    kept = [t.obs_text for t in buffer]
    assert kept == [f"obs {i}" for i in range(max(0, pushed - capacity), pushed)]
    if pushed:
        sample = buffer.sample(7)
        assert len(sample) == 7
        assert all(t.obs_text in kept for t in sample)


def test_replay_buffer_errors() -> None:
    """Test les erreurs de la mémoire de rejeu."""
    with pytest.raises(ValueError):
        ReplayBuffer(0, np.random.default_rng(0))
    with pytest.raises(EmptyInputError):
        ReplayBuffer(3, np.random.default_rng(0)).sample(1)


def test_select_action_greedy_tie_break() -> None:
    """Test l'argmax glouton, égalités au plus petit indice."""
    rng = np.random.default_rng(0)

    assert select_action(np.array([0.5, 2.0, 2.0]), PolicyMode.GREEDY, rng) == 1
    assert select_action(np.array([1.0, 1.0]), PolicyMode.GREEDY, rng) == 0


def test_select_action_sampling() -> None:
    """Test l'échantillonnage softmax."""
    rng = np.random.default_rng(0)

    assert select_action(np.array([0.0, 100.0]), PolicyMode.SAMPLE, rng) == 1
    picks = {select_action(np.zeros(3), PolicyMode.SAMPLE, rng) for _ in range(200)}
    assert picks == {0, 1, 2}
    with pytest.raises(EmptyInputError):
        select_action(np.array([]), PolicyMode.SAMPLE, rng)


@pytest.mark.parametrize("seed", range(100))
def test_td_target_fixed_point(seed: int) -> None:
    """Test qu'une boucle récompensée a pour point fixe r / (1 − γ)."""
    rng = np.random.default_rng(seed)
    reward = float(rng.uniform(-1, 1))
    gamma = float(rng.uniform(0.05, 0.99))
    fixed = reward / (1.0 - gamma)

    assert td_target(reward, gamma, fixed, done=False) == pytest.approx(fixed)
    assert td_target(reward, gamma, fixed, done=True) == reward
    _, grad = squared_td_loss(fixed, td_target(reward, gamma, fixed, done=False))
    assert abs(grad) < 1e-9


def test_qnetwork_dimension_check() -> None:
    """Test le refus de vecteurs de mauvaise taille."""
    qnet = QNetwork(4, np.random.default_rng(0))

    with pytest.raises(DimensionMismatchError):
        qnet.forward(np.zeros((2, 3)), np.zeros((2, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_full_pipeline_gradients(seed: int) -> None:
    """Test les gradients de bout en bout: perte TD → φ → GRU de l'encodeur → plongements."""
    encoder = tiny_encoder(seed)
    qnet = QNetwork(2, np.random.default_rng(seed + 100))
    batch = [
        Transition("you see a mug", "take mug", 1.0, "you see", ("open cupboard",), False),
        Transition("you see a cupboard", "open cupboard", 0.0, "you", (), True),
    ]
    targets = np.array([3.0, -2.0])
    params: dict[str, Array] = {**qnet.params.params, **encoder.params.param_set.params}

    def forward(_: Mapping[str, Array]) -> tuple[float, dict[str, Array]]:
        result = td_loss_and_grads(batch, targets, encoder, qnet, learn_encoder=True)
        assert result.encoder_grads is not None
        return result.loss, {**result.q_grads, **result.encoder_grads}

    assert grad_check(forward, params) < 1e-4


def test_td_loss_rejects_empty_batch() -> None:
    """Test le refus d'un lot vide."""
    qnet = QNetwork(4, np.random.default_rng(0))

    with pytest.raises(EmptyInputError):
        td_loss_and_grads([], np.zeros(0), HashEncoder(4), qnet)


def test_bootstrap_targets() -> None:
    """Test les cibles: r pour un terminal, r + γ max Q sinon."""
    agent = DRRNAgent(HashEncoder(4), AgentConfig(gamma=0.5))
    batch = [transition(0, reward=1.0), transition(1, done=True, reward=2.0)]
    targets = agent.bootstrap_targets(batch)
    max_next = agent.q_values("obs 1", ["look", "take mug"]).max()

    assert targets[0] == pytest.approx(1.0 + 0.5 * max_next)
    assert targets[1] == 2.0


def test_q_values_are_pairwise(embedding_encoder: EmbeddingEncoder) -> None:
    """Test qu'une Q-valeur ne dépend pas des autres actions du lot."""
    agent = DRRNAgent(embedding_encoder, AgentConfig())
    actions = ["look", "take mug from table", "open cupboard"]
    together = agent.q_values("You see a table.", actions)

    for i, action in enumerate(actions):
        alone = agent.q_values("You see a table.", [action])
        assert alone[0] == pytest.approx(together[i])
    assert agent.q_values("You see a table.", []).shape == (0,)


def test_agent_is_deterministic(easy_spec: GameSpec, fast_agent_config: AgentConfig) -> None:
    """Test que deux agents de même graine apprennent les mêmes poids."""
    fingerprints = []
    for _ in range(2):
        agent = DRRNAgent(HashEncoder(5), fast_agent_config)
        train(agent, easy_spec, 3)
        fingerprints.append(agent.qnet.params.fingerprint())

    assert fingerprints[0] == fingerprints[1]


def test_train_step_waits_for_warmup(fast_agent_config: AgentConfig) -> None:
    """Test qu'aucune mise à jour n'a lieu sous le seuil de chauffe."""
    agent = DRRNAgent(HashEncoder(5), fast_agent_config)
    for i in range(fast_agent_config.warmup_transitions - 1):
        agent.remember(transition(i))

    before = agent.qnet.params.fingerprint()
    assert agent.train_step() is None
    assert agent.qnet.params.fingerprint() == before
    assert agent.updates == 0


def test_frozen_encoder_never_changes(
    small_table: EmbeddingTable, easy_spec: GameSpec, fast_agent_config: AgentConfig
) -> None:
    """Test qu'un encodeur gelé reste identique même si le réglage fin est demandé."""
    params = EncoderParams.initialise(small_table.copy(), 5, np.random.default_rng(1), frozen=True)
    encoder = EmbeddingEncoder(params)
    config = fast_agent_config.model_copy(update={"fine_tune_encoder": True})
    agent = DRRNAgent(encoder, config)
    before_encoder = encoder.fingerprint()
    before_qnet = agent.qnet.params.fingerprint()

    train(agent, easy_spec, 3)

    assert agent.updates > 0
    assert not agent.learns_encoder
    assert encoder.fingerprint() == before_encoder
    assert agent.qnet.params.fingerprint() != before_qnet


def test_finetuning_moves_only_seen_tokens(
    embedding_encoder: EmbeddingEncoder, easy_spec: GameSpec, fast_agent_config: AgentConfig
) -> None:
    """Test que seules les lignes des jetons vus en entraînement bougent."""
    config = fast_agent_config.model_copy(update={"fine_tune_encoder": True})
    agent = DRRNAgent(embedding_encoder, config)
    train(agent, easy_spec, 3)
    table = embedding_encoder.params.embedding

    moved = {
        token
        for token, index in table.vocab.items()
        if not np.array_equal(table.matrix[index], table.pretrained_snapshot[index])
    }
    assert agent.learns_encoder
    assert moved
    assert moved - {UNK_TOKEN} <= agent.corpus.seen


def test_corpus_tracks_rewarded_tokens(scripted_spec: GameSpec) -> None:
    """Test que les jetons de l'action récompensée sont marqués récompensés."""
    agent = DRRNAgent(HashEncoder(4), AgentConfig(warmup_transitions=1000))
    env = GameEnv(scripted_spec)
    obs = env.reset()
    for action in oracle_solve(scripted_spec) or []:
        result = env.step(action)
        agent.remember(
            Transition(
                obs.text,
                action,
                float(result.reward),
                result.observation.text,
                result.observation.admissible_actions,
                result.done and not result.truncated,
            )
        )
        obs = result.observation

    assert {"mug", "cupboard"} <= agent.corpus.rewarded
    assert "table" in agent.corpus.seen


def test_replay_oracle_scores_one(scripted_spec: GameSpec) -> None:
    """Test le rejeu de la solution de l'oracle."""
    result = replay_episode(GameEnv(scripted_spec), oracle_solve(scripted_spec) or [])

    assert result.normalized_score == 1.0
    assert result.moves == 3


def test_episodes_on_solved_game(solved_spec: GameSpec, fast_agent_config: AgentConfig) -> None:
    """Test qu'une partie finie dès le reset donne un épisode vide au score maximal."""
    env = GameEnv(solved_spec)
    agent = DRRNAgent(HashEncoder(4), fast_agent_config)

    for result in (
        play_episode(env, agent, PolicyMode.SAMPLE, learn=True),
        play_episode(env, agent, PolicyMode.GREEDY),
        replay_episode(env, ["look", "look"]),
    ):
        assert result.moves == 0
        assert result.score == result.max_score
        assert result.normalized_score == 1.0
    assert len(agent.buffer) == 0


def test_greedy_episode_is_reproducible(easy_spec: GameSpec) -> None:
    """Test qu'une évaluation gloutonne ne dépend que des poids."""
    agent = DRRNAgent(HashEncoder(5), AgentConfig(seed=3))
    env = GameEnv(easy_spec)
    first = play_episode(env, agent, PolicyMode.GREEDY)
    second = play_episode(env, agent, PolicyMode.GREEDY)

    assert first == second
    assert 0.0 <= first.normalized_score <= 1.0
    assert len(agent.buffer) == 0


def test_truncated_transition_is_not_terminal(
    scripted_spec: GameSpec, fast_agent_config: AgentConfig
) -> None:
    """Test qu'une fin par troncature garde une cible bootstrappée."""
    env = GameEnv(replace(scripted_spec, max_steps=1))
    agent = DRRNAgent(HashEncoder(4), fast_agent_config)
    result = play_episode(env, agent, PolicyMode.SAMPLE, learn=True)

    assert result.moves == 1
    assert result.score == 0
    assert len(agent.buffer) == 1
    assert not list(agent.buffer)[0].done


@pytest.mark.parametrize("fine_tune", [False, True])
def test_checkpoint_round_trip(
    tmp_path: Path,
    embedding_encoder: EmbeddingEncoder,
    easy_spec: GameSpec,
    fast_agent_config: AgentConfig,
    fine_tune: bool,
) -> None:
    """Test qu'un checkpoint relu redonne les mêmes poids et Q-valeurs."""
    config = fast_agent_config.model_copy(update={"fine_tune_encoder": fine_tune})
    agent = DRRNAgent(embedding_encoder, config)
    train(agent, easy_spec, 1)
    save_checkpoint(agent, tmp_path / "ckpt")

    loaded = load_checkpoint(tmp_path / "ckpt", config)
    actions = ["look", "take mug from table"]

    assert loaded.qnet.params.fingerprint() == agent.qnet.params.fingerprint()
    assert loaded.encoder.fingerprint() == agent.encoder.fingerprint()
    assert np.array_equal(
        loaded.q_values("You see a table.", actions), agent.q_values("You see a table.", actions)
    )
    assert loaded.updates == agent.updates
    assert isinstance(loaded.encoder, EmbeddingEncoder)
    assert np.array_equal(
        loaded.encoder.params.embedding.pretrained_snapshot,
        embedding_encoder.params.embedding.pretrained_snapshot,
    )


def test_checkpoint_hash_encoder(tmp_path: Path, fast_agent_config: AgentConfig) -> None:
    """Test le checkpoint d'un agent à encodeur par hachage."""
    agent = DRRNAgent(HashEncoder(5, salt=2), fast_agent_config)
    save_checkpoint(agent, tmp_path)
    loaded = load_checkpoint(tmp_path, fast_agent_config)

    assert isinstance(loaded.encoder, HashEncoder)
    assert loaded.encoder.salt == 2
    assert loaded.qnet.params.fingerprint() == agent.qnet.params.fingerprint()


def test_checkpoint_errors(tmp_path: Path, fast_agent_config: AgentConfig) -> None:
    """Test les erreurs de relecture d'un checkpoint."""
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path, fast_agent_config)

    agent = DRRNAgent(HashEncoder(5), fast_agent_config)
    save_checkpoint(agent, tmp_path)
    np.save(tmp_path / "qnet" / "head_b.npy", np.ones(1))
    with pytest.raises(CheckpointError, match="Empreinte"):
        load_checkpoint(tmp_path, fast_agent_config)
