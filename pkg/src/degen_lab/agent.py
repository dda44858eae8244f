"""Agent DRRN: Q(o, a) = tête(GRU état-action(f(o), f(a))).

Exploration par échantillonnage softmax sur les Q-valeurs, mémoire de rejeu
uniforme et apprentissage TD, avec rétropropagation optionnelle dans l'encodeur.
"""

import json
from collections import deque
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import AgentConfig
from .engine import normalized_score
from .exceptions import CheckpointError, DimensionMismatchError, EmptyInputError
from .logger import logger
from .models import Environment, EpisodeResult, PolicyMode, Transition
from .numcore import (
    GRU_PARAM_NAMES,
    Array,
    Grads,
    LinearCache,
    ParamSet,
    SequenceCache,
    adam_step,
    gru_sequence_backward,
    gru_sequence_forward,
    init_gru_params,
    init_linear_params,
    linear_backward,
    linear_forward,
    softmax,
    squared_td_loss,
)
from .textenc import (
    EmbeddingEncoder,
    EmbeddingTable,
    EncoderParams,
    HashEncoder,
    TextEncoder,
    TrainingCorpus,
    load_embedding_file,
    write_embedding_file,
)

SA_PREFIX = "sa_"


# ============================================================================
# RÉSEAU Q
# ============================================================================


@dataclass
class QCache:
    """Activations de la passe avant du réseau Q."""

    sequence: SequenceCache
    head: LinearCache


class QNetwork:
    """GRU état-action (entrée h, caché h) suivi d'une tête linéaire h → 1."""

    def __init__(self, hidden: int, rng: np.random.Generator) -> None:
        gru = init_gru_params(rng, hidden, hidden)
        head_W, head_b = init_linear_params(rng, hidden, 1)
        self.params = ParamSet(
            {
                **{f"{SA_PREFIX}{name}": value for name, value in gru.items()},
                "head_W": head_W,
                "head_b": head_b,
            }
        )

    @property
    def hidden(self) -> int:
        """Taille h des vecteurs encodés attendus."""
        return int(self.params["head_W"].shape[1])

    @property
    def gru(self) -> dict[str, Array]:
        """Vue des poids du GRU état-action sous leurs noms standards."""
        return {name: self.params[f"{SA_PREFIX}{name}"] for name in GRU_PARAM_NAMES}

    def forward(self, obs_vectors: Array, action_vectors: Array) -> tuple[Array, QCache]:
        """Q-valeurs (N,) pour N paires (f(o), f(a)).

        Raises:
            DimensionMismatchError: Si les vecteurs n'ont pas la taille h
        """
        if obs_vectors.shape != action_vectors.shape or obs_vectors.shape[-1] != self.hidden:
            raise DimensionMismatchError(
                f"Vecteurs {obs_vectors.shape} / {action_vectors.shape}, h={self.hidden}"
            )
        xs = np.stack([obs_vectors, action_vectors], axis=1)
        h, sequence = gru_sequence_forward(xs, np.ones(xs.shape[:2], dtype=bool), self.gru)
        y, head = linear_forward(h, self.params["head_W"], self.params["head_b"])
        return y[:, 0], QCache(sequence=sequence, head=head)

    def backward(self, dq: Array, cache: QCache) -> tuple[Array, Array, Grads]:
        """Rétropropage dQ.

        Returns:
            (d f(o), d f(a), gradients des paramètres φ)
        """
        dh, d_head_W, d_head_b = linear_backward(dq[:, None], cache.head)
        dxs, gru_grads = gru_sequence_backward(dh, cache.sequence, self.gru)
        grads = {f"{SA_PREFIX}{name}": value for name, value in gru_grads.items()}
        grads["head_W"] = d_head_W
        grads["head_b"] = d_head_b
        return dxs[:, 0, :], dxs[:, 1, :], grads


def q_value(obs_text: str, action_text: str, encoder: TextEncoder, qnet: QNetwork) -> float:
    """Q(o, a) pour une seule paire."""
    vectors = encoder.encode([obs_text, action_text])
    q, _ = qnet.forward(vectors[:1], vectors[1:])
    return float(q[0])


def select_action(q_values: Array, mode: PolicyMode, rng: np.random.Generator) -> int:
    """Choisit un indice d'action.

    En mode échantillonnage l'indice suit softmax(q); en mode glouton c'est
    l'argmax, les égalités allant au plus petit indice.

    Raises:
        EmptyInputError: Si aucune Q-valeur n'est fournie
    """
    if len(q_values) == 0:
        raise EmptyInputError("aucune action à choisir")
    if mode == PolicyMode.GREEDY:
        return int(np.argmax(q_values))
    probabilities = softmax(q_values)
    return int(rng.choice(len(probabilities), p=probabilities))


def td_target(reward: float, gamma: float, max_next_q: float, done: bool) -> float:
    """Cible de Bellman: r si terminal, sinon r + γ · max Q(o', a')."""
    if done:
        return float(reward)
    return float(reward + gamma * max_next_q)


# ============================================================================
# MÉMOIRE DE REJEU
# ============================================================================


class ReplayBuffer:
    """Mémoire circulaire: éviction FIFO, tirage uniforme avec remise."""

    def __init__(self, capacity: int, rng: np.random.Generator) -> None:
        if capacity < 1:
            raise ValueError(f"Capacité invalide: {capacity}")
        self._memory: deque[Transition] = deque(maxlen=capacity)
        self.rng = rng

    @property
    def capacity(self) -> int:
        """Nombre maximal de transitions."""
        return self._memory.maxlen or 0

    def push(self, transition: Transition) -> None:
        """Ajoute une transition (la plus ancienne sort si la mémoire est pleine)."""
        self._memory.append(transition)

    def sample(self, batch_size: int) -> list[Transition]:
        """Tire batch_size transitions uniformément, avec remise.

        Raises:
            EmptyInputError: Si la mémoire est vide
        """
        if not self._memory:
            raise EmptyInputError("mémoire de rejeu vide")
        indices = self.rng.integers(0, len(self._memory), size=batch_size)
        return [self._memory[int(i)] for i in indices]

    def __len__(self) -> int:
        return len(self._memory)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self._memory)


# ============================================================================
# PERTE TD
# ============================================================================


@dataclass
class TDLoss:
    """Perte TD moyenne d'un lot et ses gradients."""

    loss: float
    q: Array
    q_grads: Grads
    encoder_grads: Optional[Grads]


def td_loss_and_grads(
    transitions: list[Transition],
    targets: Array,
    encoder: TextEncoder,
    qnet: QNetwork,
    learn_encoder: bool = False,
) -> TDLoss:
    """Perte moyenne (cible − Q)² sur le lot et gradients de φ (et de l'encodeur).

    Les cibles sont des constantes: aucun gradient ne traverse le bootstrap.

    Raises:
        EmptyInputError: Si le lot est vide
    """
    n = len(transitions)
    if n == 0:
        raise EmptyInputError("lot de transitions vide")
    texts = [t.obs_text for t in transitions] + [t.action_text for t in transitions]

    if learn_encoder:
        assert isinstance(encoder, EmbeddingEncoder)
        vectors, cache = encoder.forward(texts)
    else:
        vectors = encoder.encode(texts)

    q, q_cache = qnet.forward(vectors[:n], vectors[n:])
    losses, dq = squared_td_loss(q, targets)
    d_obs, d_action, q_grads = qnet.backward(np.asarray(dq) / n, q_cache)

    encoder_grads = None
    if learn_encoder:
        assert isinstance(encoder, EmbeddingEncoder)
        encoder_grads = encoder.backward(np.concatenate([d_obs, d_action]), cache)
    return TDLoss(
        loss=float(np.mean(losses)), q=q, q_grads=q_grads, encoder_grads=encoder_grads
    )


# ============================================================================
# AGENT
# ============================================================================


class DRRNAgent:
    """Encodeur, réseau Q, optimiseur, mémoire de rejeu et corpus d'un run.

    Un agent appartient à un seul fil d'exécution.
    """

    def __init__(self, encoder: TextEncoder, config: AgentConfig) -> None:
        """Initialise l'agent.

        Args:
            encoder: Encodeur de texte (sa taille de sortie fixe h)
            config: Hyperparamètres
        """
        self.encoder = encoder
        self.config = config
        init_seq, policy_seq, replay_seq = np.random.SeedSequence(config.seed).spawn(3)
        self.qnet = QNetwork(encoder.output_dim, np.random.default_rng(init_seq))
        self.policy_rng = np.random.default_rng(policy_seq)
        self.buffer = ReplayBuffer(config.replay_capacity, np.random.default_rng(replay_seq))
        self.corpus = TrainingCorpus()
        self.total_steps = 0
        self.updates = 0

    @property
    def learns_encoder(self) -> bool:
        """Vrai si les mises à jour atteignent l'encodeur."""
        return self.config.fine_tune_encoder and self.encoder.trainable

    def q_values(self, obs_text: str, actions: list[str]) -> Array:
        """Q-valeurs de chaque action admissible; chaque paire est évaluée indépendamment."""
        if not actions:
            return np.zeros(0)
        vectors = self.encoder.encode([obs_text, *actions])
        obs = np.repeat(vectors[:1], len(actions), axis=0)
        q, _ = self.qnet.forward(obs, vectors[1:])
        return q

    def remember(self, transition: Transition) -> None:
        """Range une transition et met à jour le corpus d'entraînement."""
        self.buffer.push(transition)
        self.corpus.record(
            [transition.obs_text, transition.action_text, transition.next_obs_text],
            transition.reward,
        )

    def bootstrap_targets(self, batch: list[Transition]) -> Array:
        """Cibles TD du lot, calculées avec les paramètres courants sans gradient."""
        targets = np.zeros(len(batch))
        pending = [i for i, t in enumerate(batch) if not t.done]

        obs_texts: list[str] = []
        action_texts: list[str] = []
        for i in pending:
            actions = batch[i].next_admissible_actions
            obs_texts += [batch[i].next_obs_text] * len(actions)
            action_texts += list(actions)

        q_next = np.zeros(0)
        if pending:
            vectors = self.encoder.encode(obs_texts + action_texts)
            q_next, _ = self.qnet.forward(vectors[: len(obs_texts)], vectors[len(obs_texts) :])

        offset = 0
        for i, t in enumerate(batch):
            max_next = 0.0
            if not t.done:
                count = len(t.next_admissible_actions)
                max_next = float(q_next[offset : offset + count].max())
                offset += count
            targets[i] = td_target(t.reward, self.config.gamma, max_next, t.done)
        return targets

    def _apply(self, params: ParamSet, grads: Grads) -> None:
        params.zero_grad()
        params.accumulate(grads)
        adam_step(params, self.config.lr, self.config.beta1, self.config.beta2, self.config.eps)

    def train_step(self) -> Optional[float]:
        """Un pas d'apprentissage TD sur un lot tiré de la mémoire.

        Returns:
            Perte moyenne du lot, ou None tant que la mémoire est sous le seuil de chauffe
        """
        if len(self.buffer) < self.config.warmup_transitions:
            logger.debug(
                f"Chauffe: {len(self.buffer)}/{self.config.warmup_transitions} transitions"
            )
            return None

        batch = self.buffer.sample(self.config.batch_size)
        targets = self.bootstrap_targets(batch)
        result = td_loss_and_grads(batch, targets, self.encoder, self.qnet, self.learns_encoder)

        self._apply(self.qnet.params, result.q_grads)
        if result.encoder_grads is not None:
            assert isinstance(self.encoder, EmbeddingEncoder)
            self._apply(self.encoder.params.param_set, result.encoder_grads)
            self.encoder.invalidate()
        self.updates += 1
        return result.loss


# ============================================================================
# ÉPISODES
# ============================================================================


def play_episode(
    env: Environment,
    agent: DRRNAgent,
    mode: PolicyMode,
    learn: bool = False,
    episode: int = 0,
) -> EpisodeResult:
    """Joue un épisode complet.

    En apprentissage, chaque transition est mémorisée et un pas TD a lieu toutes
    les `train_every` étapes. Une troncature à max_steps n'est pas terminale
    pour la cible TD.
    """
    obs = env.reset()
    losses: list[float] = []
    # Une partie déjà finie au reset donne un épisode vide
    while not env.done:
        actions = list(obs.admissible_actions)
        index = select_action(agent.q_values(obs.text, actions), mode, agent.policy_rng)
        result = env.step(actions[index])

        if learn:
            agent.remember(
                Transition(
                    obs_text=obs.text,
                    action_text=actions[index],
                    reward=float(result.reward),
                    next_obs_text=result.observation.text,
                    next_admissible_actions=result.observation.admissible_actions,
                    done=result.done and not result.truncated,
                )
            )
            agent.total_steps += 1
            if agent.total_steps % agent.config.train_every == 0:
                loss = agent.train_step()
                if loss is not None:
                    losses.append(loss)

        obs = result.observation

    outcome = EpisodeResult(
        episode=episode,
        game_id=env.game_id,
        score=env.score,
        max_score=env.max_score,
        normalized_score=normalized_score(env.score, env.max_score),
        moves=env.moves,
        mean_loss=float(np.mean(losses)) if losses else 0.0,
    )
    logger.debug(
        f"Épisode {episode} ({env.game_id}, {mode.value}): score {outcome.score}/"
        f"{outcome.max_score} en {outcome.moves} pas"
    )
    return outcome


def replay_episode(env: Environment, actions: list[str], episode: int = 0) -> EpisodeResult:
    """Rejoue une séquence d'actions fixée (par ex. celle de l'oracle)."""
    env.reset()
    for action in actions:
        if env.done:
            break
        env.step(action)
    return EpisodeResult(
        episode=episode,
        game_id=env.game_id,
        score=env.score,
        max_score=env.max_score,
        normalized_score=normalized_score(env.score, env.max_score),
        moves=env.moves,
    )


# ============================================================================
# CHECKPOINTS
# ============================================================================

META_FILE = "meta.json"
EMBEDDING_FILE = "embedding.txt"
PRETRAINED_FILE = "embedding_pretrained.txt"


def save_checkpoint(agent: DRRNAgent, directory: Path) -> None:
    """Écrit les poids de φ et de l'encodeur dans un répertoire.

    Fichiers .npy par paramètre, instantanés GloVe de la table et meta.json;
    le contenu ne dépend que des poids.
    """
    (directory / "qnet").mkdir(parents=True, exist_ok=True)
    for name, value in agent.qnet.params.params.items():
        np.save(directory / "qnet" / f"{name}.npy", value)

    encoder = agent.encoder
    meta: dict[str, object] = {
        "output_dim": encoder.output_dim,
        "total_steps": agent.total_steps,
        "updates": agent.updates,
        "qnet_fingerprint": agent.qnet.params.fingerprint(),
        "encoder_fingerprint": encoder.fingerprint(),
    }
    if isinstance(encoder, HashEncoder):
        meta.update({"encoder": "hash", "salt": encoder.salt})
    else:
        params = encoder.params
        meta.update({"encoder": "embedding", "frozen": params.frozen})
        (directory / "encoder").mkdir(parents=True, exist_ok=True)
        for name in GRU_PARAM_NAMES:
            np.save(directory / "encoder" / f"{name}.npy", params.gru[name])
        table = params.embedding
        write_embedding_file(table, directory / "encoder" / EMBEDDING_FILE)
        pretrained = EmbeddingTable(
            vocab=table.vocab, matrix=table.pretrained_snapshot.copy(), unk_row=table.unk_row
        )
        write_embedding_file(pretrained, directory / "encoder" / PRETRAINED_FILE)

    (directory / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    logger.debug(f"Checkpoint écrit dans {directory}")


def _load_array(path: Path, shape: tuple[int, ...]) -> Array:
    if not path.exists():
        raise CheckpointError(f"Fichier manquant: {path}")
    value: Array = np.load(path)
    if value.shape != shape:
        raise CheckpointError(f"{path.name}: forme {value.shape}, attendu {shape}")
    return value


def load_checkpoint(directory: Path, config: AgentConfig) -> DRRNAgent:
    """Reconstruit un agent depuis un checkpoint (poids identiques au bit près).

    Raises:
        CheckpointError: Fichier manquant, forme ou empreinte incohérente
    """
    meta_path = directory / META_FILE
    if not meta_path.exists():
        raise CheckpointError(f"{META_FILE} absent de {directory}")
    meta = json.loads(meta_path.read_text())

    encoder: TextEncoder
    if meta.get("encoder") == "hash":
        encoder = HashEncoder(int(meta["output_dim"]), int(meta["salt"]))
    elif meta.get("encoder") == "embedding":
        table = load_embedding_file(directory / "encoder" / EMBEDDING_FILE)
        pretrained = load_embedding_file(directory / "encoder" / PRETRAINED_FILE)
        if pretrained.vocab != table.vocab:
            raise CheckpointError("Vocabulaires différents entre table et instantané")
        table = EmbeddingTable(
            vocab=table.vocab,
            matrix=table.matrix,
            unk_row=table.unk_row,
            pretrained_snapshot=pretrained.matrix,
        )
        hidden = int(meta["output_dim"])
        shapes = {
            "W": (hidden, table.dim),
            "U": (hidden, hidden),
            "b": (hidden,),
        }
        gru = {
            name: _load_array(directory / "encoder" / f"{name}.npy", shapes[name[0]])
            for name in GRU_PARAM_NAMES
        }
        encoder = EmbeddingEncoder(EncoderParams(table, gru, frozen=bool(meta["frozen"])))
    else:
        raise CheckpointError(f"Encodeur inconnu dans {META_FILE}: {meta.get('encoder')!r}")

    agent = DRRNAgent(encoder, config)
    for name, value in agent.qnet.params.params.items():
        value[...] = _load_array(directory / "qnet" / f"{name}.npy", value.shape)
    agent.total_steps = int(meta.get("total_steps", 0))
    agent.updates = int(meta.get("updates", 0))

    if agent.qnet.params.fingerprint() != meta.get("qnet_fingerprint"):
        raise CheckpointError("Empreinte du réseau Q incohérente")
    if encoder.fingerprint() != meta.get("encoder_fingerprint"):
        raise CheckpointError("Empreinte de l'encodeur incohérente")
    return agent
