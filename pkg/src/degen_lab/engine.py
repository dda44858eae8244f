"""Génération et simulation déterministes des parties de rangement (POMDP).

Les fonctions de ce module sont pures: l'état est une valeur immuable et chaque
pas retourne un nouvel état. `GameEnv` n'est qu'un emballage pratique autour.
"""

import dataclasses
import json
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .exceptions import GameOverError, InadmissibleActionError, PoolExhaustedError, ScoreDomainError
from .models import (
    INVENTORY,
    ConceptPool,
    Difficulty,
    Furniture,
    FurnitureKind,
    GameObject,
    GameSpec,
    GameState,
    Goal,
    Observation,
    Room,
    StepResult,
    VocabMode,
    floor_of,
)
from .templates import Fact, FactSet, render_facts

DEFAULT_MAX_STEPS = 50
SEED_MASK = (1 << 64) - 1
OPEN_PROBABILITY = 0.3

StateKey = tuple[str, tuple[str, ...], tuple[bool, ...], tuple[bool, ...]]


@dataclass(frozen=True)
class DifficultyRule:
    """Bornes (incluses) de génération pour une difficulté."""

    objects: tuple[int, int]
    targets: tuple[int, int]
    rooms: tuple[int, int]
    distractors: int


DIFFICULTY_RULES: dict[Difficulty, DifficultyRule] = {
    Difficulty.EASY: DifficultyRule(objects=(1, 1), targets=(1, 1), rooms=(1, 1), distractors=1),
    Difficulty.MEDIUM: DifficultyRule(objects=(2, 3), targets=(1, 3), rooms=(1, 1), distractors=2),
    Difficulty.HARD: DifficultyRule(objects=(6, 7), targets=(5, 7), rooms=(1, 2), distractors=2),
}

_DIFFICULTY_STREAM = {Difficulty.EASY: 0, Difficulty.MEDIUM: 1, Difficulty.HARD: 2}


@dataclass(frozen=True)
class Move:
    """Effet d'une action admissible."""

    kind: str
    obj: int = -1
    furniture: int = -1
    target: str = ""


@dataclass(frozen=True)
class _SpecIndex:
    furniture_by_name: dict[str, int]
    rooms_by_name: dict[str, Room]
    goal_objects: tuple[int, ...]


@lru_cache(maxsize=512)
def _index(spec: GameSpec) -> _SpecIndex:
    object_index = {obj.name: i for i, obj in enumerate(spec.objects)}
    return _SpecIndex(
        furniture_by_name={f.name: i for i, f in enumerate(spec.furniture)},
        rooms_by_name={room.name: room for room in spec.rooms},
        goal_objects=tuple(object_index[goal.object_name] for goal in spec.goals),
    )


def _rng(seed: int, difficulty: Difficulty) -> np.random.Generator:
    # Le mode de vocabulaire n'entre pas dans la graine: parties ID et OOD de même
    # graine partagent la même structure
    return np.random.default_rng(
        np.random.SeedSequence([seed & SEED_MASK, _DIFFICULTY_STREAM[difficulty]])
    )


def _draw(rng: np.random.Generator, bounds: tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


# ============================================================================
# GÉNÉRATION
# ============================================================================


def generate_game(
    difficulty: Difficulty,
    seed: int,
    pool: ConceptPool,
    vocab_mode: VocabMode = VocabMode.ID,
    max_steps: int = DEFAULT_MAX_STEPS,
    template_set_id: int = 0,
) -> GameSpec:
    """Génère une partie de rangement de façon déterministe.

    Args:
        difficulty: Difficulté (bornes d'objets, cibles et pièces)
        seed: Graine (entier quelconque, réduit modulo 2**64)
        pool: Pool de concepts
        vocab_mode: Noms d'objets tirés des listes ID ou OOD
        max_steps: Nombre maximal de pas par épisode
        template_set_id: Famille de templates des observations

    Returns:
        Spécification de la partie

    Raises:
        PoolExhaustedError: Si le pool ne couvre pas les comptes demandés
    """
    rule = DIFFICULTY_RULES[difficulty]
    rng = _rng(seed, difficulty)

    n_rooms = _draw(rng, rule.rooms)
    n_objects = _draw(rng, rule.objects)
    n_targets = _draw(rng, (rule.targets[0], min(rule.targets[1], n_objects)))

    if len(pool.rooms) < n_rooms:
        raise PoolExhaustedError(f"{n_rooms} pièce(s) requises, {len(pool.rooms)} disponibles")
    if len(pool.concepts) < n_objects:
        raise PoolExhaustedError(
            f"{n_objects} concept(s) requis, {len(pool.concepts)} disponibles"
        )

    room_names = [pool.rooms[int(i)] for i in rng.choice(len(pool.rooms), n_rooms, replace=False)]
    concepts = [
        pool.concepts[int(i)] for i in rng.choice(len(pool.concepts), n_objects, replace=False)
    ]

    goal_ids = list(dict.fromkeys(concept.goal_location for concept in concepts))
    others = [item.id for item in pool.furniture if item.id not in goal_ids]
    n_distractors = min(rule.distractors, len(others))
    distractor_ids = (
        [others[int(i)] for i in rng.choice(len(others), n_distractors, replace=False)]
        if n_distractors
        else []
    )
    furniture_ids = [
        (goal_ids + distractor_ids)[int(i)]
        for i in rng.permutation(len(goal_ids) + len(distractor_ids))
    ]

    furniture: list[Furniture] = []
    for furniture_id in furniture_ids:
        concept = pool.furniture_by_id(furniture_id)
        room = room_names[int(rng.integers(0, n_rooms))]
        is_open = bool(rng.random() < OPEN_PROBABILITY)
        furniture.append(
            Furniture(
                name=concept.name,
                concept_id=concept.id,
                kind=concept.kind,
                room=room,
                initially_open=is_open and concept.kind == FurnitureKind.CONTAINER,
            )
        )
    name_of = {item.concept_id: item.name for item in furniture}

    objects: list[GameObject] = []
    goals: list[Goal] = []
    for position, concept in enumerate(concepts):
        names = (
            concept.surface_names_ood if vocab_mode == VocabMode.OOD else concept.surface_names_id
        )
        # Même nombre de tirages quel que soit le mode de vocabulaire
        name = names[int(rng.integers(0, 1 << 30)) % len(names)]
        destination = name_of[concept.goal_location]
        candidates = [item.name for item in furniture if item.name != destination]
        candidates += [floor_of(room) for room in room_names]
        start = candidates[int(rng.integers(0, len(candidates)))]
        if position < n_targets:
            objects.append(GameObject(name=name, concept_id=concept.id, location=start))
            goals.append(Goal(object_name=name, destination=destination))
        else:
            objects.append(GameObject(name=name, concept_id=concept.id, location=destination))

    if n_rooms == 2:
        rooms = (
            Room(name=room_names[0], exits=(("east", room_names[1]),)),
            Room(name=room_names[1], exits=(("west", room_names[0]),)),
        )
    else:
        rooms = (Room(name=room_names[0]),)

    return GameSpec(
        seed=seed,
        difficulty=difficulty,
        vocab_mode=vocab_mode,
        rooms=rooms,
        furniture=tuple(furniture),
        objects=tuple(objects),
        goals=tuple(goals),
        max_steps=max_steps,
        template_set_id=template_set_id,
    )


def scripted_cooccurrence_spec(
    pool: ConceptPool,
    concept_id: str = "mug",
    room: str = "kitchen",
    distractor_id: str = "table",
    max_steps: int = DEFAULT_MAX_STEPS,
) -> GameSpec:
    """Partie à un objectif dont la seule action récompensée contient l'objet et sa destination.

    L'objet commence sur le meuble distracteur; la destination est fermée.
    """
    concept = pool.concept_by_id(concept_id)
    destination = pool.furniture_by_id(concept.goal_location)
    distractor = pool.furniture_by_id(distractor_id)
    name = concept.surface_names_id[0]
    return GameSpec(
        seed=0,
        difficulty=Difficulty.EASY,
        vocab_mode=VocabMode.ID,
        rooms=(Room(name=room),),
        furniture=(
            Furniture(destination.name, destination.id, destination.kind, room),
            Furniture(distractor.name, distractor.id, distractor.kind, room),
        ),
        objects=(GameObject(name=name, concept_id=concept.id, location=distractor.name),),
        goals=(Goal(object_name=name, destination=destination.name),),
        max_steps=max_steps,
    )


# ============================================================================
# SIMULATION
# ============================================================================


def _goals_satisfied(placements: tuple[str, ...], spec: GameSpec) -> tuple[bool, ...]:
    goal_objects = _index(spec).goal_objects
    return tuple(
        placements[obj] == goal.destination
        for obj, goal in zip(goal_objects, spec.goals, strict=True)
    )


def _is_accessible(furniture: Furniture, index: int, state: GameState) -> bool:
    if furniture.room != state.current_room:
        return False
    return furniture.kind == FurnitureKind.SUPPORTER or state.open_flags[index]


def _legal_moves(state: GameState, spec: GameSpec) -> dict[str, Move]:
    idx = _index(spec)
    moves: dict[str, Move] = {"look": Move("look")}

    for direction, target in idx.rooms_by_name[state.current_room].exits:
        moves[f"go {direction}"] = Move("go", target=target)

    for fi, item in enumerate(spec.furniture):
        if (
            item.room == state.current_room
            and item.kind == FurnitureKind.CONTAINER
            and not state.open_flags[fi]
        ):
            moves[f"open {item.name}"] = Move("open", furniture=fi)

    here = floor_of(state.current_room)
    for oi, obj in enumerate(spec.objects):
        location = state.placements[oi]
        if location == INVENTORY:
            for fi, item in enumerate(spec.furniture):
                if _is_accessible(item, fi, state):
                    prep = "in" if item.kind == FurnitureKind.CONTAINER else "on"
                    moves[f"put {obj.name} {prep} {item.name}"] = Move("put", obj=oi, furniture=fi)
        elif location == here:
            moves[f"take {obj.name}"] = Move("take", obj=oi)
        elif location in idx.furniture_by_name:
            fi = idx.furniture_by_name[location]
            if _is_accessible(spec.furniture[fi], fi, state):
                moves[f"take {obj.name} from {location}"] = Move("take", obj=oi)

    return moves


def admissible_actions(state: GameState, spec: GameSpec) -> list[str]:
    """Actions légales dans l'état, triées lexicographiquement."""
    return sorted(_legal_moves(state, spec))


def observation_fact_list(state: GameState, spec: GameSpec) -> list[Fact]:
    """Faits visibles depuis l'état, dans l'ordre de rendu."""
    room = _index(spec).rooms_by_name[state.current_room]
    facts: list[Fact] = [("room", room.name)]
    facts += [("exit", direction) for direction, _ in room.exits]

    for fi, item in enumerate(spec.furniture):
        if item.room != state.current_room:
            continue
        if item.kind == FurnitureKind.CONTAINER:
            facts.append(("container", item.name, "open" if state.open_flags[fi] else "closed"))
            relation = "in"
        else:
            facts.append(("supporter", item.name))
            relation = "on"
        if _is_accessible(item, fi, state):
            facts += [
                (relation, obj.name, item.name)
                for oi, obj in enumerate(spec.objects)
                if state.placements[oi] == item.name
            ]

    here = floor_of(state.current_room)
    facts += [
        ("floor", obj.name) for oi, obj in enumerate(spec.objects) if state.placements[oi] == here
    ]
    facts += [
        ("carrying", obj.name)
        for oi, obj in enumerate(spec.objects)
        if state.placements[oi] == INVENTORY
    ]
    return facts


def observation_facts(state: GameState, spec: GameSpec) -> FactSet:
    """Ensemble des faits visibles (pièce, meubles et statut, placements, inventaire)."""
    return frozenset(observation_fact_list(state, spec))


def render_observation(
    state: GameState, spec: GameSpec, template_set_id: Optional[int] = None
) -> str:
    """Rend l'observation textuelle de l'état.

    Raises:
        UnknownTemplateSetError: Si la famille de templates n'existe pas
    """
    set_id = spec.template_set_id if template_set_id is None else template_set_id
    return render_facts(observation_fact_list(state, spec), set_id)


def observe(state: GameState, spec: GameSpec, template_set_id: Optional[int] = None) -> Observation:
    """Construit l'observation complète (texte + actions admissibles)."""
    return Observation(
        text=render_observation(state, spec, template_set_id),
        admissible_actions=tuple(admissible_actions(state, spec)),
    )


def reset(spec: GameSpec) -> tuple[GameState, Observation]:
    """Retourne l'état initial et sa première observation."""
    placements = tuple(obj.location for obj in spec.objects)
    # Un objectif déjà atteint au départ est acquis: il compte au score et ne paiera jamais
    achieved = _goals_satisfied(placements, spec)
    state = GameState(
        current_room=spec.rooms[0].name,
        placements=placements,
        open_flags=tuple(
            item.initially_open and item.kind == FurnitureKind.CONTAINER for item in spec.furniture
        ),
        achieved=achieved,
        score=sum(achieved),
        steps=0,
        done=bool(spec.goals) and all(achieved),
    )
    return state, observe(state, spec)


def apply_action(state: GameState, spec: GameSpec, action: str) -> tuple[GameState, int]:
    """Applique une action et retourne (nouvel état, récompense) sans rendu de texte.

    Raises:
        GameOverError: Si l'épisode est déjà terminé
        InadmissibleActionError: Si l'action n'est pas admissible
    """
    if state.done:
        raise GameOverError(f"Partie {spec.game_id} terminée, action {action!r} refusée")
    move = _legal_moves(state, spec).get(action)
    if move is None:
        raise InadmissibleActionError(action)

    room = state.current_room
    placements = list(state.placements)
    open_flags = list(state.open_flags)
    if move.kind == "go":
        room = move.target
    elif move.kind == "open":
        open_flags[move.furniture] = True
    elif move.kind == "take":
        placements[move.obj] = INVENTORY
    elif move.kind == "put":
        placements[move.obj] = spec.furniture[move.furniture].name

    # Chaque objectif ne rapporte qu'une fois par épisode
    satisfied = _goals_satisfied(tuple(placements), spec)
    achieved = tuple(a or s for a, s in zip(state.achieved, satisfied, strict=True))
    reward = sum(
        1 for before, after in zip(state.achieved, achieved, strict=True) if after != before
    )
    steps = state.steps + 1

    return (
        GameState(
            current_room=room,
            placements=tuple(placements),
            open_flags=tuple(open_flags),
            achieved=achieved,
            score=state.score + reward,
            steps=steps,
            done=all(achieved) or steps >= spec.max_steps,
        ),
        reward,
    )


def step(
    state: GameState, spec: GameSpec, action: str
) -> tuple[GameState, Observation, int, bool]:
    """Applique une action admissible.

    Returns:
        (nouvel état, observation, récompense, fin d'épisode)
    """
    new_state, reward = apply_action(state, spec, action)
    return new_state, observe(new_state, spec), reward, new_state.done


def normalized_score(score: int, max_score: int) -> float:
    """Score divisé par le score maximal.

    Raises:
        ScoreDomainError: Si max_score < 1 ou si le score sort de [0, max_score]
    """
    if max_score < 1:
        raise ScoreDomainError(f"Score maximal invalide: {max_score}")
    if not 0 <= score <= max_score:
        raise ScoreDomainError(f"Score {score} hors de [0, {max_score}]")
    return score / max_score


# ============================================================================
# ORACLE ET GRAPHE D'ÉTATS
# ============================================================================


def state_key(state: GameState) -> StateKey:
    """Clé d'état indépendante du compteur de pas."""
    return (state.current_room, state.placements, state.open_flags, state.achieved)


def _relevant_moves(state: GameState, spec: GameSpec) -> tuple[list[str], list[str]]:
    """Sépare les actions utiles en (sûres, déplacements).

    Une action sûre (ouvrir un contenant utile, prendre une cible, poser une cible à
    sa destination) n'allonge jamais une solution: la jouer tout de suite est
    toujours optimal. Seuls les déplacements entre pièces demandent un vrai choix.
    """
    idx = _index(spec)
    destination_of = {
        obj: goal.destination for obj, goal in zip(idx.goal_objects, spec.goals, strict=True)
    }
    # Un objet déjà à destination n'a plus besoin d'être déplacé
    pending = {
        obj
        for obj, done in zip(idx.goal_objects, state.achieved, strict=True)
        if not done and state.placements[obj] != destination_of[obj]
    }
    destinations = {destination_of[obj] for obj in pending}
    holders = {state.placements[obj] for obj in pending}

    safe: list[str] = []
    goes: list[str] = []
    for action, move in sorted(_legal_moves(state, spec).items()):
        if move.kind == "go":
            goes.append(action)
        elif move.kind == "open":
            name = spec.furniture[move.furniture].name
            if name in holders or name in destinations:
                safe.append(action)
        elif move.kind == "take" and move.obj in pending:
            safe.append(action)
        elif move.kind == "put" and move.obj in pending:
            if spec.furniture[move.furniture].name == destination_of[move.obj]:
                safe.append(action)
    return safe, goes


def oracle_solve(spec: GameSpec) -> Optional[list[str]]:
    """Recherche en largeur d'une plus courte séquence d'actions résolvant la partie.

    La recherche parcourt le graphe d'états exact restreint aux actions utiles,
    ce qui préserve la longueur optimale; les actions sont développées dans
    l'ordre des actions admissibles.

    Returns:
        Séquence d'actions (vide si la partie est déjà résolue), ou None si aucune
        solution n'existe en au plus spec.max_steps actions
    """
    initial, _ = reset(spec)
    if all(_goals_satisfied(initial.placements, spec)):
        return []

    parents: dict[StateKey, tuple[Optional[StateKey], str]] = {state_key(initial): (None, "")}
    frontier: deque[tuple[GameState, int]] = deque([(initial, 0)])

    while frontier:
        state, depth = frontier.popleft()
        if depth >= spec.max_steps:
            continue
        safe, goes = _relevant_moves(state, spec)
        candidates = safe[:1] if safe else (goes or ["look"])
        for action in candidates:
            child, _ = apply_action(state, spec, action)
            key = state_key(child)
            if key in parents:
                continue
            parents[key] = (state_key(state), action)
            if all(child.achieved):
                return _rebuild_path(parents, key)
            if not child.done:
                frontier.append((child, depth + 1))
    return None


def _rebuild_path(
    parents: dict[StateKey, tuple[Optional[StateKey], str]], key: StateKey
) -> list[str]:
    path: list[str] = []
    current: Optional[StateKey] = key
    while current is not None:
        parent, action = parents[current]
        if parent is not None:
            path.append(action)
        current = parent
    path.reverse()
    return path


@dataclass
class StateGraph:
    """Graphe d'états exact: arêtes (action, état suivant, récompense)."""

    initial: StateKey
    edges: dict[StateKey, list[tuple[str, StateKey, int]]]


def state_graph(spec: GameSpec, max_states: int = 50_000) -> StateGraph:
    """Explore exhaustivement le graphe d'états (sans troncature par max_steps).

    Raises:
        ValueError: Si le graphe dépasse max_states états
    """
    unbounded = dataclasses.replace(spec, max_steps=1 << 62)
    initial, _ = reset(unbounded)
    edges: dict[StateKey, list[tuple[str, StateKey, int]]] = {}
    frontier: deque[GameState] = deque([initial])
    seen = {state_key(initial)}

    while frontier:
        state = frontier.popleft()
        key = state_key(state)
        out: list[tuple[str, StateKey, int]] = []
        for action in admissible_actions(state, unbounded):
            child, reward = apply_action(state, unbounded, action)
            child_key = state_key(child)
            out.append((action, child_key, reward))
            if child_key not in seen and not child.done:
                seen.add(child_key)
                frontier.append(child)
            elif child_key not in seen:
                seen.add(child_key)
                edges[child_key] = []
        edges[key] = out
        if len(seen) > max_states:
            raise ValueError(f"Graphe de {spec.game_id} au-delà de {max_states} états")
    return StateGraph(initial=state_key(initial), edges=edges)


# ============================================================================
# ENVIRONNEMENT
# ============================================================================


class GameEnv:
    """Environnement à état autour des fonctions pures du moteur."""

    def __init__(self, spec: GameSpec, template_set_id: Optional[int] = None) -> None:
        """Initialise l'environnement.

        Args:
            spec: Partie à jouer
            template_set_id: Famille de templates (défaut: celle de la spec)
        """
        self.spec = spec
        self.template_set_id = spec.template_set_id if template_set_id is None else template_set_id
        self._state: Optional[GameState] = None

    @property
    def state(self) -> GameState:
        """État courant (après reset)."""
        if self._state is None:
            raise RuntimeError("Environnement non initialisé: appelez reset()")
        return self._state

    @property
    def game_id(self) -> str:
        """Identifiant de la partie."""
        return self.spec.game_id

    @property
    def max_score(self) -> int:
        """Score maximal de la partie."""
        return self.spec.max_score

    @property
    def score(self) -> int:
        """Score courant."""
        return self.state.score

    @property
    def moves(self) -> int:
        """Pas joués depuis le dernier reset."""
        return self.state.steps

    @property
    def done(self) -> bool:
        """Vrai si la partie est finie (y compris dès le reset)."""
        return self.state.done

    def render(self, state: GameState) -> Observation:
        """Observation d'un état avec la famille de templates de l'environnement."""
        return observe(state, self.spec, self.template_set_id)

    def reset(self) -> Observation:
        """Réinitialise la partie."""
        self._state, _ = reset(self.spec)
        return self.render(self._state)

    def step(self, action: str) -> StepResult:
        """Joue une action admissible."""
        self._state, reward = apply_action(self.state, self.spec, action)
        state = self._state
        return StepResult(
            observation=self.render(state),
            reward=reward,
            done=state.done,
            truncated=state.done and not all(state.achieved),
            score=state.score,
        )


# ============================================================================
# SÉRIALISATION
# ============================================================================


def spec_to_dict(spec: GameSpec) -> dict[str, Any]:
    """Forme JSON d'une GameSpec (champs identiques au type)."""
    return {
        "seed": spec.seed,
        "difficulty": spec.difficulty.value,
        "vocab_mode": spec.vocab_mode.value,
        "rooms": [
            {"name": room.name, "exits": [list(pair) for pair in room.exits]}
            for room in spec.rooms
        ],
        "furniture": [
            {
                "name": item.name,
                "concept_id": item.concept_id,
                "kind": item.kind.value,
                "room": item.room,
                "initially_open": item.initially_open,
            }
            for item in spec.furniture
        ],
        "objects": [
            {"name": obj.name, "concept_id": obj.concept_id, "location": obj.location}
            for obj in spec.objects
        ],
        "goals": [
            {"object_name": goal.object_name, "destination": goal.destination}
            for goal in spec.goals
        ],
        "max_steps": spec.max_steps,
        "template_set_id": spec.template_set_id,
    }


def spec_from_dict(data: dict[str, Any]) -> GameSpec:
    """Reconstruit une GameSpec depuis sa forme JSON."""
    return GameSpec(
        seed=int(data["seed"]),
        difficulty=Difficulty(data["difficulty"]),
        vocab_mode=VocabMode(data["vocab_mode"]),
        rooms=tuple(
            Room(name=room["name"], exits=tuple((d, t) for d, t in room["exits"]))
            for room in data["rooms"]
        ),
        furniture=tuple(
            Furniture(
                name=item["name"],
                concept_id=item["concept_id"],
                kind=FurnitureKind(item["kind"]),
                room=item["room"],
                initially_open=bool(item["initially_open"]),
            )
            for item in data["furniture"]
        ),
        objects=tuple(
            GameObject(name=obj["name"], concept_id=obj["concept_id"], location=obj["location"])
            for obj in data["objects"]
        ),
        goals=tuple(
            Goal(object_name=goal["object_name"], destination=goal["destination"])
            for goal in data["goals"]
        ),
        max_steps=int(data["max_steps"]),
        template_set_id=int(data["template_set_id"]),
    )


def dump_game_spec(spec: GameSpec) -> str:
    """Sérialise une GameSpec en JSON stable."""
    return json.dumps(spec_to_dict(spec), indent=2) + "\n"


def save_game_spec(spec: GameSpec, path: Path) -> None:
    """Écrit une GameSpec sur disque."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_game_spec(spec), encoding="utf-8")


def load_game_spec(path: Path) -> GameSpec:
    """Lit une GameSpec depuis un fichier JSON."""
    return spec_from_dict(json.loads(path.read_text(encoding="utf-8")))
