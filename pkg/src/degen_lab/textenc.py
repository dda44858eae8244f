"""Tokenisation et encodeurs de texte (hachage, plongements + GRU)."""

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    EmbeddingParseError,
    InconsistentDimensionError,
    NumericFaultError,
    VocabMismatchError,
)
from .logger import logger
from .models import ConceptPool
from .numcore import (
    GRU_PARAM_NAMES,
    Array,
    Grads,
    ParamSet,
    SequenceCache,
    gru_sequence_backward,
    gru_sequence_forward,
    init_gru_params,
)

TOKEN_RE = re.compile(r"[a-z0-9]+")
UNK_TOKEN = "<unk>"
SYNONYM_NOISE = 0.05
DEFAULT_CACHE_SIZE = 4096


def tokenize(text: str) -> list[str]:
    """Découpe en jetons minuscules; la ponctuation et les espaces séparent et disparaissent."""
    return TOKEN_RE.findall(text.lower())


def _unit(vector: Array) -> Array:
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else vector


def hash_encode(text: str, dim: int, salt: int = 0) -> Array:
    """Vecteur pseudo-aléatoire unitaire déterminé par le hachage du texte entier.

    Raises:
        ValueError: Si dim < 1
    """
    if dim < 1:
        raise ValueError(f"Dimension de hachage invalide: {dim}")
    digest = hashlib.sha256(f"{salt}:{text.lower()}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return _unit(rng.uniform(-1.0, 1.0, size=dim))


def cosine_distance(u: Array, v: Array) -> float:
    """1 − cosinus; 0 exactement pour deux vecteurs identiques.

    Raises:
        ValueError: Si l'un des vecteurs est nul
    """
    if np.array_equal(u, v) and np.any(u):
        return 0.0
    norm = float(np.linalg.norm(u) * np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("Distance cosinus indéfinie pour un vecteur nul")
    return float(np.clip(1.0 - float(u @ v) / norm, 0.0, 2.0))


# ============================================================================
# TABLE DE PLONGEMENTS
# ============================================================================


@dataclass
class EmbeddingTable:
    """Table de plongements; la ligne `unk_row` sert aux jetons inconnus.

    `pretrained_snapshot` est une copie en lecture seule de la matrice au chargement.
    """

    vocab: dict[str, int]
    matrix: Array
    unk_row: int
    pretrained_snapshot: Array = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise DimensionMismatchError(f"Matrice de plongements de forme {self.matrix.shape}")
        size = self.matrix.shape[0]
        if any(not 0 <= index < size for index in self.vocab.values()) or not (
            0 <= self.unk_row < size
        ):
            raise ValueError("Index de vocabulaire hors de la matrice")
        if not np.all(np.isfinite(self.matrix)):
            raise NumericFaultError("Plongements non finis")
        if self.pretrained_snapshot is None:
            self.pretrained_snapshot = self.matrix.copy()
        self.pretrained_snapshot.flags.writeable = False

    @property
    def dim(self) -> int:
        """Dimension d des plongements."""
        return int(self.matrix.shape[1])

    @property
    def tokens(self) -> list[str]:
        """Jetons dans l'ordre des lignes."""
        return sorted(self.vocab, key=self.vocab.__getitem__)

    def index(self, token: str) -> int:
        """Ligne d'un jeton (ligne inconnue pour un jeton hors vocabulaire)."""
        return self.vocab.get(token, self.unk_row)

    def vector(self, token: str) -> Array:
        """Vecteur courant d'un jeton."""
        return self.matrix[self.index(token)]

    def copy(self) -> "EmbeddingTable":
        """Copie indépendante, instantané pré-entraîné conservé."""
        return EmbeddingTable(
            vocab=dict(self.vocab),
            matrix=self.matrix.copy(),
            unk_row=self.unk_row,
            pretrained_snapshot=self.pretrained_snapshot.copy(),
        )


def parse_embedding_lines(lines: list[str]) -> EmbeddingTable:
    """Analyse des lignes au format GloVe (« jeton v1 … vd »).

    Raises:
        EmbeddingParseError: Ligne mal formée (avec son numéro)
        InconsistentDimensionError: Dimensions différentes entre lignes
    """
    tokens: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    dim: Optional[int] = None

    for number, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 2:
            raise EmbeddingParseError(f"aucune valeur pour {parts[0]!r}", number)
        token = parts[0]
        try:
            values = [float(part) for part in parts[1:]]
        except ValueError as e:
            raise EmbeddingParseError(f"valeur non numérique ({e})", number) from None
        if not all(np.isfinite(values)):
            raise EmbeddingParseError(f"valeur non finie pour {token!r}", number)
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise InconsistentDimensionError(
                f"{len(values)} valeurs pour {token!r}, {dim} attendues", number
            )
        if token in seen:
            raise EmbeddingParseError(f"jeton {token!r} dupliqué", number)
        tokens.append(token)
        seen.add(token)
        rows.append(values)

    if not rows:
        raise EmbeddingParseError("aucun plongement trouvé")

    matrix = np.array(rows, dtype=np.float64)
    vocab = {token: index for index, token in enumerate(tokens)}
    if UNK_TOKEN not in vocab:
        # Ligne inconnue: moyenne de toutes les lignes
        vocab[UNK_TOKEN] = len(tokens)
        matrix = np.vstack([matrix, matrix.mean(axis=0)])
    return EmbeddingTable(vocab=vocab, matrix=matrix, unk_row=vocab[UNK_TOKEN])


def load_embedding_file(path: Union[str, Path]) -> EmbeddingTable:
    """Charge un fichier de plongements au format GloVe texte."""
    with open(path, encoding="utf-8") as f:
        table = parse_embedding_lines(f.readlines())
    logger.debug(f"Plongements chargés depuis {path}: |V|={len(table.vocab)}, d={table.dim}")
    return table


def write_embedding_file(table: EmbeddingTable, path: Union[str, Path]) -> None:
    """Écrit la table courante au format GloVe (ligne inconnue incluse).

    repr() donne la plus courte écriture décimale exacte: relire le fichier
    redonne la même matrice au bit près.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for token in table.tokens:
            values = " ".join(repr(float(v)) for v in table.matrix[table.vocab[token]])
            f.write(f"{token} {values}\n")


def synth_pretrain(pool: ConceptPool, d: int, seed: int) -> EmbeddingTable:
    """Plongements synthétiques où les synonymes d'un même concept sont voisins.

    Chaque concept (objet, meuble, pièce) reçoit un centroïde unitaire aléatoire;
    chacun de ses noms vaut centroïde + bruit gaussien (σ = 0.05), renormalisé.
    Les mots-outils ont des vecteurs unitaires indépendants.

    Raises:
        ValueError: Si d < 2
    """
    if d < 2:
        raise ValueError(f"Dimension de plongement invalide: {d}")
    rng = np.random.default_rng(seed)

    groups: list[list[str]] = [
        list(concept.surface_names_id) + list(concept.surface_names_ood)
        for concept in pool.concepts
    ]
    groups += [list(item.names) for item in pool.furniture]
    groups += [[room] for room in pool.rooms]

    vocab: dict[str, int] = {}
    rows: list[Array] = []
    for names in groups:
        centroid = _unit(rng.standard_normal(d))
        for name in names:
            vocab[name] = len(rows)
            rows.append(_unit(centroid + rng.normal(0.0, SYNONYM_NOISE, size=d)))
    for word in pool.function_words:
        vocab[word] = len(rows)
        rows.append(_unit(rng.standard_normal(d)))

    matrix = np.array(rows)
    mean = matrix.mean(axis=0)
    vocab[UNK_TOKEN] = len(rows)
    matrix = np.vstack([matrix, _unit(mean)])
    return EmbeddingTable(vocab=vocab, matrix=matrix, unk_row=vocab[UNK_TOKEN])


def embed_sequence(tokens: list[str], table: EmbeddingTable) -> Array:
    """Matrice d×T dont la colonne t est le plongement du jeton t."""
    if not tokens:
        return np.zeros((table.dim, 0))
    return table.matrix[[table.index(token) for token in tokens]].T


def gru_encode(matrix: Array, gru_params: dict[str, Array]) -> Array:
    """État final du GRU sur une séquence d×T, depuis h_0 = 0.

    Raises:
        DimensionMismatchError: Si d diffère de la dimension d'entrée du GRU
    """
    input_dim = gru_params["W_z"].shape[1]
    if matrix.ndim != 2 or matrix.shape[0] != input_dim:
        raise DimensionMismatchError(
            f"Séquence de forme {matrix.shape}, dimension d'entrée {input_dim} attendue"
        )
    xs = matrix.T[None, :, :]
    h, _ = gru_sequence_forward(xs, np.ones(xs.shape[:2], dtype=bool), gru_params)
    return h[0]


@dataclass(frozen=True)
class TokenDrift:
    """Distance cosinus d'un jeton à son plongement pré-entraîné."""

    distance: float
    degenerate: bool = False


def token_drift(current: Array, initial: Array) -> TokenDrift:
    """Distance 1 − cos entre deux lignes; une ligne de norme nulle est dégénérée (distance 1)."""
    if np.array_equal(current, initial) and np.any(current):
        return TokenDrift(0.0)
    if not np.any(current) or not np.any(initial):
        return TokenDrift(1.0, degenerate=True)
    return TokenDrift(cosine_distance(current, initial))


def embedding_drift(
    table: EmbeddingTable, reference: Optional[EmbeddingTable] = None
) -> dict[str, TokenDrift]:
    """Dérive de chaque ligne de la table par rapport à une référence.

    La référence par défaut est l'instantané pré-entraîné de la table.

    Raises:
        VocabMismatchError: Si la référence n'a pas le même vocabulaire ni la même forme
    """
    if reference is not None and (
        reference.vocab != table.vocab or reference.matrix.shape != table.matrix.shape
    ):
        raise VocabMismatchError("Les instantanés ne partagent pas le même vocabulaire")
    initial = table.pretrained_snapshot if reference is None else reference.matrix
    return {
        token: token_drift(table.matrix[index], initial[index])
        for token, index in table.vocab.items()
    }


def nearest_neighbours(table: EmbeddingTable, token: str, k: int = 5) -> list[tuple[str, float]]:
    """Les k jetons les plus proches (similarité cosinus décroissante, jeton exclu)."""
    norms = np.linalg.norm(table.matrix, axis=1)
    norms[norms == 0] = 1.0
    unit = table.matrix / norms[:, None]
    similarities = unit @ unit[table.index(token)]
    ranked = sorted(
        (
            (other, float(similarities[index]))
            for other, index in table.vocab.items()
            if other != token
        ),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return ranked[:k]


# ============================================================================
# PARAMÈTRES ET ENCODEURS
# ============================================================================


@dataclass
class EncoderParams:
    """État d'un encodeur à plongements: table, poids GRU, drapeau de gel.

    `param_set` partage ses tableaux avec `embedding.matrix` et `gru`.
    """

    embedding: EmbeddingTable
    gru: dict[str, Array]
    frozen: bool
    param_set: ParamSet = field(init=False)

    def __post_init__(self) -> None:
        if self.gru["W_z"].shape[1] != self.embedding.dim:
            raise DimensionMismatchError(
                f"GRU d'entrée {self.gru['W_z'].shape[1]} pour plongements de dimension "
                f"{self.embedding.dim}"
            )
        self.param_set = ParamSet({"embedding": self.embedding.matrix, **self.gru})
        self.embedding.matrix = self.param_set.params["embedding"]
        self.gru = {name: self.param_set.params[name] for name in GRU_PARAM_NAMES}

    @classmethod
    def initialise(
        cls, table: EmbeddingTable, hidden: int, rng: np.random.Generator, frozen: bool
    ) -> "EncoderParams":
        """Crée les poids GRU (Glorot, biais nuls) au-dessus d'une table."""
        return cls(embedding=table, gru=init_gru_params(rng, table.dim, hidden), frozen=frozen)

    @property
    def hidden_size(self) -> int:
        """Dimension h des vecteurs encodés."""
        return int(self.gru["W_z"].shape[0])

    def fingerprint(self) -> str:
        """Empreinte SHA-256 de tous les poids."""
        return self.param_set.fingerprint()


@dataclass
class EncodeCache:
    """Données de la passe avant nécessaires à la rétropropagation."""

    indices: Array
    mask: Array
    sequence: Optional[SequenceCache]


class HashEncoder:
    """Encodeur par hachage du texte entier: aucun paramètre, aucune sémantique."""

    trainable = False
    params: Optional[EncoderParams] = None

    def __init__(self, dim: int, salt: int = 0) -> None:
        self.output_dim = dim
        self.salt = salt

    def encode(self, texts: list[str]) -> Array:
        """Vecteurs (B, dim)."""
        if not texts:
            return np.zeros((0, self.output_dim))
        return np.stack([hash_encode(text, self.output_dim, self.salt) for text in texts])

    def forward(self, texts: list[str]) -> tuple[Array, Optional[EncodeCache]]:
        """Comme encode; pas de cache."""
        return self.encode(texts), None

    def fingerprint(self) -> str:
        """Empreinte de la configuration (l'encodeur n'a pas de poids)."""
        return hashlib.sha256(f"hash:{self.output_dim}:{self.salt}".encode()).hexdigest()

    def invalidate(self) -> None:
        """Rien à invalider."""


class EmbeddingEncoder:
    """Plongements + GRU; réentraînable si les paramètres ne sont pas gelés."""

    def __init__(self, params: EncoderParams, cache_size: int = DEFAULT_CACHE_SIZE) -> None:
        self.params = params
        self.output_dim = params.hidden_size
        self.cache_size = cache_size
        self._cache: dict[str, Array] = {}

    @property
    def trainable(self) -> bool:
        """Vrai si les poids peuvent recevoir des mises à jour."""
        return not self.params.frozen

    def _batch(self, texts: list[str]) -> tuple[Array, Array]:
        table = self.params.embedding
        sequences = [[table.index(token) for token in tokenize(text)] for text in texts]
        length = max((len(seq) for seq in sequences), default=0)
        indices = np.zeros((len(texts), length), dtype=np.int64)
        mask = np.zeros((len(texts), length), dtype=bool)
        for row, seq in enumerate(sequences):
            indices[row, : len(seq)] = seq
            mask[row, : len(seq)] = True
        return indices, mask

    def forward(self, texts: list[str]) -> tuple[Array, EncodeCache]:
        """Encode un lot et garde de quoi rétropropager."""
        indices, mask = self._batch(texts)
        xs = self.params.embedding.matrix[indices]
        h, sequence = gru_sequence_forward(xs, mask, self.params.gru)
        return h, EncodeCache(indices=indices, mask=mask, sequence=sequence)

    def backward(self, d_vectors: Array, cache: EncodeCache) -> Grads:
        """Gradients de la table (lignes des jetons réels seulement) et du GRU."""
        assert cache.sequence is not None
        dxs, grads = gru_sequence_backward(d_vectors, cache.sequence, self.params.gru)
        d_embedding = np.zeros_like(self.params.embedding.matrix)
        np.add.at(d_embedding, cache.indices[cache.mask], dxs[cache.mask])
        grads["embedding"] = d_embedding
        return grads

    def encode(self, texts: list[str]) -> Array:
        """Vecteurs (B, h); résultats mémorisés par texte jusqu'à invalidate().

        Au-delà de cache_size textes, les plus anciens sont oubliés.
        """
        if not texts:
            return np.zeros((0, self.output_dim))
        missing = list(dict.fromkeys(text for text in texts if text not in self._cache))
        fresh: dict[str, Array] = {}
        if missing:
            h, _ = self.forward(missing)
            fresh = dict(zip(missing, h, strict=True))
        vectors = np.stack([fresh[text] if text in fresh else self._cache[text] for text in texts])
        self._cache.update(fresh)
        while len(self._cache) > self.cache_size:
            del self._cache[next(iter(self._cache))]
        return vectors

    def invalidate(self) -> None:
        """Oublie les encodages mémorisés (à appeler après une mise à jour des poids)."""
        self._cache.clear()

    def fingerprint(self) -> str:
        """Empreinte des poids."""
        return self.params.fingerprint()


TextEncoder = Union[HashEncoder, EmbeddingEncoder]


# ============================================================================
# CORPUS D'ENTRAÎNEMENT
# ============================================================================


@dataclass
class TrainingCorpus:
    """Jetons vus pendant l'entraînement, séparés selon la récompense de la transition."""

    seen: set[str] = field(default_factory=set)
    rewarded: set[str] = field(default_factory=set)

    def record(self, texts: list[str], reward: float) -> None:
        """Enregistre les jetons des textes d'une transition."""
        tokens = {token for text in texts for token in tokenize(text)}
        self.seen |= tokens
        if reward > 0:
            self.rewarded |= tokens

    def to_dict(self) -> dict[str, list[str]]:
        """Forme JSON triée."""
        return {"seen": sorted(self.seen), "rewarded": sorted(self.rewarded)}

    @classmethod
    def from_dict(cls, data: dict[str, list[str]]) -> "TrainingCorpus":
        """Reconstruit depuis la forme JSON."""
        return cls(seen=set(data.get("seen", [])), rewarded=set(data.get("rewarded", [])))

    def save(self, path: Path) -> None:
        """Écrit le corpus en JSON."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "TrainingCorpus":
        """Relit un corpus JSON."""
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
