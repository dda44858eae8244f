"""Modèles de données pour Degen Lab."""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol

INVENTORY = "inventory"
FLOOR_PREFIX = "floor:"


def floor_of(room: str) -> str:
    """Retourne l'emplacement « sol » d'une pièce."""
    return f"{FLOOR_PREFIX}{room}"


class Difficulty(str, Enum):
    """Niveau de difficulté d'une partie."""

    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


class VocabMode(str, Enum):
    """Vocabulaire utilisé pour nommer les objets."""

    ID = "id"
    OOD = "ood"


class FurnitureKind(str, Enum):
    """Type de meuble."""

    CONTAINER = "container"  # s'ouvre, on met « dans »
    SUPPORTER = "supporter"  # toujours accessible, on pose « sur »


class PerturbMode(str, Enum):
    """Transformation appliquée aux textes pendant l'évaluation."""

    NONE = "none"
    PARAPHRASE = "paraphrase"
    LEXICAL = "lexical"


class EncoderKind(str, Enum):
    """Famille d'encodeur de texte."""

    HASH = "hash"
    EMBEDDING_FROZEN = "embedding_frozen"
    EMBEDDING_FINETUNED = "embedding_finetuned"


class PolicyMode(str, Enum):
    """Politique de sélection d'action."""

    SAMPLE = "sample"
    GREEDY = "greedy"


class GameSet(str, Enum):
    """Jeu de parties sur lequel une évaluation est faite."""

    TRAIN = "train"
    ID = "id"
    OOD = "ood"


@dataclass(frozen=True)
class Concept:
    """Concept d'objet avec ses noms ID/OOD et son emplacement de bon sens."""

    id: str
    surface_names_id: tuple[str, ...]
    surface_names_ood: tuple[str, ...]
    goal_location: str


@dataclass(frozen=True)
class FurnitureConcept:
    """Concept de meuble; le premier nom est celui utilisé dans les parties."""

    id: str
    kind: FurnitureKind
    names: tuple[str, ...]

    @property
    def name(self) -> str:
        """Nom canonique du meuble."""
        return self.names[0]


@dataclass(frozen=True)
class ConceptPool:
    """Pool de concepts, meubles, pièces et mots-outils."""

    concepts: tuple[Concept, ...]
    furniture: tuple[FurnitureConcept, ...]
    rooms: tuple[str, ...]
    function_words: tuple[str, ...]

    def furniture_by_id(self, furniture_id: str) -> FurnitureConcept:
        """Retrouve un concept de meuble par son identifiant."""
        for item in self.furniture:
            if item.id == furniture_id:
                return item
        raise KeyError(furniture_id)

    def concept_by_id(self, concept_id: str) -> Concept:
        """Retrouve un concept d'objet par son identifiant."""
        for concept in self.concepts:
            if concept.id == concept_id:
                return concept
        raise KeyError(concept_id)


@dataclass(frozen=True)
class Room:
    """Pièce et ses sorties (direction, pièce cible)."""

    name: str
    exits: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Furniture:
    """Meuble placé dans une pièce."""

    name: str
    concept_id: str
    kind: FurnitureKind
    room: str
    initially_open: bool = False


@dataclass(frozen=True)
class GameObject:
    """Objet et son emplacement initial."""

    name: str
    concept_id: str
    location: str


@dataclass(frozen=True)
class Goal:
    """Objectif: amener l'objet sur/dans sa destination."""

    object_name: str
    destination: str


@dataclass(frozen=True)
class GameSpec:
    """Description immuable d'une partie générée."""

    seed: int
    difficulty: Difficulty
    vocab_mode: VocabMode
    rooms: tuple[Room, ...]
    furniture: tuple[Furniture, ...]
    objects: tuple[GameObject, ...]
    goals: tuple[Goal, ...]
    max_steps: int = 50
    template_set_id: int = 0

    @property
    def max_score(self) -> int:
        """Score maximal atteignable (un point par objectif)."""
        return len(self.goals)

    @property
    def game_id(self) -> str:
        """Identifiant lisible de la partie."""
        return f"{self.difficulty.value}-{self.vocab_mode.value}-{self.seed}"


@dataclass(frozen=True)
class GameState:
    """État du POMDP; les tuples sont alignés sur spec.objects / spec.furniture / spec.goals."""

    current_room: str
    placements: tuple[str, ...]
    open_flags: tuple[bool, ...]
    achieved: tuple[bool, ...]
    score: int = 0
    steps: int = 0
    done: bool = False


@dataclass(frozen=True)
class Observation:
    """Texte rendu et actions admissibles."""

    text: str
    admissible_actions: tuple[str, ...]


@dataclass(frozen=True)
class StepResult:
    """Résultat d'un pas dans un environnement."""

    observation: Observation
    reward: int
    done: bool
    truncated: bool
    score: int


@dataclass(frozen=True)
class Transition:
    """Enregistrement de la mémoire de rejeu."""

    obs_text: str
    action_text: str
    reward: float
    next_obs_text: str
    next_admissible_actions: tuple[str, ...]
    done: bool

    def __post_init__(self) -> None:
        if not self.done and not self.next_admissible_actions:
            raise ValueError("next_admissible_actions vide pour une transition non terminale")


@dataclass
class EpisodeResult:
    """Métriques d'un épisode."""

    episode: int
    game_id: str
    score: int
    max_score: int
    normalized_score: float
    moves: int
    mean_loss: float = 0.0


@dataclass
class EvalRecord:
    """Résultat d'une partie jouée en évaluation gloutonne."""

    encoder: EncoderKind
    run_seed: int
    game_set: GameSet
    mode: PerturbMode
    game_id: str
    score: int
    max_score: int
    normalized_score: float
    moves: int


@dataclass
class RunResult:
    """Résultat d'un run (un encodeur, une graine)."""

    encoder: EncoderKind
    run_seed: int
    episodes: list[EpisodeResult] = field(default_factory=list)
    evaluations: list[EvalRecord] = field(default_factory=list)
    snapshot_start: Optional[Path] = None
    snapshot_end: Optional[Path] = None
    corpus_path: Optional[Path] = None
    checkpoint_dir: Optional[Path] = None


class Environment(Protocol):
    """Interface commune des environnements (brut ou perturbé)."""

    @property
    def game_id(self) -> str: ...

    @property
    def max_score(self) -> int: ...

    @property
    def score(self) -> int: ...

    @property
    def moves(self) -> int: ...

    @property
    def done(self) -> bool: ...

    def reset(self) -> Observation: ...

    def step(self, action: str) -> StepResult: ...
