"""Perturbations d'évaluation: substitution lexicale et paraphrase par templates.

Les transformations ne touchent que le texte; les actions perturbées restent en
bijection avec les actions du moteur.
"""

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import DEFAULT_MAX_STEPS, GameEnv, generate_game, render_observation
from .exceptions import InadmissibleActionError, LexiconError, MissingAlternateError
from .logger import logger
from .models import (
    ConceptPool,
    Difficulty,
    Environment,
    GameSpec,
    GameState,
    Observation,
    PerturbMode,
    StepResult,
    VocabMode,
)
from .templates import alternate_template_sets
from .textenc import TOKEN_RE

DEFAULT_LEXICON_RESOURCE = "lexicon.tsv"
_WORD_RE = re.compile(r"[A-Za-z0-9]+")


@dataclass(frozen=True)
class Lexicon:
    """Jeton → remplacements ordonnés (le premier est utilisé)."""

    entries: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        for token, replacements in self.entries.items():
            if not TOKEN_RE.fullmatch(token):
                raise LexiconError(f"Entrée invalide {token!r}")
            if not replacements:
                raise LexiconError(f"Aucun remplacement pour {token!r}")
            for replacement in replacements:
                if not TOKEN_RE.fullmatch(replacement):
                    raise LexiconError(f"Remplacement {replacement!r} de {token!r}: un seul jeton")
            if replacements[0] == token:
                raise LexiconError(f"{token!r} se remplace par lui-même")

        # Une seule passe de substitution doit suffire: aucun remplacement n'est une entrée
        for token, replacements in self.entries.items():
            for replacement in replacements:
                if replacement in self.entries:
                    raise LexiconError(
                        f"Remplacement {replacement!r} de {token!r}: c'est aussi une entrée"
                    )

    def __contains__(self, token: object) -> bool:
        return token in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def first(self, token: str) -> Optional[str]:
        """Premier remplacement d'un jeton, s'il est couvert."""
        replacements = self.entries.get(token)
        return replacements[0] if replacements else None


def parse_lexicon(lines: list[str]) -> Lexicon:
    """Analyse des lignes « jeton<TAB>rep1,rep2,… » (lignes vides et # ignorées).

    Raises:
        LexiconError: Ligne mal formée ou lexique invalide
    """
    entries: dict[str, tuple[str, ...]] = {}
    for number, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        token, sep, rest = line.partition("\t")
        token = token.strip()
        if not sep:
            raise LexiconError(f"ligne {number}: tabulation manquante")
        if token in entries:
            raise LexiconError(f"ligne {number}: entrée {token!r} dupliquée")
        entries[token] = tuple(part.strip() for part in rest.split(",") if part.strip())
    return Lexicon(entries)


def load_lexicon(path: Optional[Path] = None) -> Lexicon:
    """Charge un lexique TSV (par défaut celui livré avec le paquet)."""
    if path is not None:
        with open(path, encoding="utf-8") as f:
            lexicon = parse_lexicon(f.readlines())
    else:
        resource = resources.files("degen_lab").joinpath("data", DEFAULT_LEXICON_RESOURCE)
        with resource.open("r", encoding="utf-8") as f:
            lexicon = parse_lexicon(f.readlines())
    logger.debug(f"Lexique chargé: {len(lexicon)} entrées")
    return lexicon


def lexicon_from_pool(pool: ConceptPool) -> Lexicon:
    """Dérive le lexique du pool: noms ID → noms OOD, nom canonique d'un meuble → synonymes."""
    entries: dict[str, tuple[str, ...]] = {}
    for concept in pool.concepts:
        for name in concept.surface_names_id:
            entries[name] = concept.surface_names_ood
    for item in pool.furniture:
        if len(item.names) > 1:
            entries[item.name] = item.names[1:]
    return Lexicon(entries)


def _text_rng(text: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{text}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def lexical_substitute(text: str, lexicon: Lexicon, rate: float = 1.0, seed: int = 0) -> str:
    """Remplace chaque jeton couvert par son premier remplacement avec probabilité `rate`.

    Le tirage dépend seulement de (texte, graine); le reste du texte (espaces,
    ponctuation) est conservé, si bien qu'un lexique vide rend le texte intact.

    Raises:
        ValueError: Si rate n'est pas dans ]0, 1]
    """
    if not 0 < rate <= 1:
        raise ValueError(f"Taux de substitution hors de ]0, 1]: {rate}")
    if not len(lexicon):
        return text
    rng = _text_rng(text, seed)

    def substitute(match: re.Match[str]) -> str:
        token = match.group(0).lower()
        replacement = lexicon.first(token)
        if replacement is None:
            return match.group(0)
        return replacement if rng.random() < rate else match.group(0)

    return _WORD_RE.sub(substitute, text)


def paraphrase_template_set(spec: GameSpec) -> int:
    """Famille de templates utilisée pour paraphraser les observations de la partie.

    Raises:
        MissingAlternateError: Si aucune autre famille n'existe
    """
    alternates = alternate_template_sets(spec.template_set_id)
    if not alternates:
        raise MissingAlternateError(
            f"Aucune famille alternative à {spec.template_set_id} pour paraphraser"
        )
    return alternates[0]


def paraphrase_render(state: GameState, spec: GameSpec) -> str:
    """Rend l'observation avec une famille de templates autre que celle d'entraînement."""
    return render_observation(state, spec, paraphrase_template_set(spec))


class PerturbedEnv:
    """Environnement dont les observations et les actions sont réécrites."""

    def __init__(
        self,
        spec: GameSpec,
        mode: PerturbMode,
        lexicon: Optional[Lexicon] = None,
        seed: int = 0,
        rate: float = 1.0,
    ) -> None:
        """Initialise l'environnement perturbé.

        Args:
            spec: Partie à jouer
            mode: Transformation appliquée
            lexicon: Lexique (mode lexical; défaut: lexique livré)
            seed: Graine des tirages de substitution
            rate: Taux de substitution
        """
        self.mode = mode
        self.seed = seed
        self.rate = rate
        self.lexicon = lexicon if lexicon is not None else Lexicon({})
        if mode == PerturbMode.LEXICAL and lexicon is None:
            self.lexicon = load_lexicon()
        template_set_id = paraphrase_template_set(spec) if mode == PerturbMode.PARAPHRASE else None
        self.env = GameEnv(spec, template_set_id=template_set_id)
        self._to_engine: dict[str, str] = {}

    @property
    def spec(self) -> GameSpec:
        """Partie sous-jacente."""
        return self.env.spec

    @property
    def state(self) -> GameState:
        """État moteur courant."""
        return self.env.state

    @property
    def game_id(self) -> str:
        """Identifiant de la partie."""
        return self.env.game_id

    @property
    def max_score(self) -> int:
        """Score maximal."""
        return self.env.max_score

    @property
    def score(self) -> int:
        """Score courant."""
        return self.env.score

    @property
    def moves(self) -> int:
        """Pas joués."""
        return self.env.moves

    @property
    def done(self) -> bool:
        """Partie finie."""
        return self.env.done

    def transform(self, text: str) -> str:
        """Réécrit un texte selon le mode (la paraphrase passe par les templates)."""
        if self.mode == PerturbMode.LEXICAL:
            return lexical_substitute(text, self.lexicon, self.rate, self.seed)
        return text

    def _wrap(self, observation: Observation) -> Observation:
        surface: list[str] = []
        counts: dict[str, int] = {}
        for action in observation.admissible_actions:
            new = self.transform(action)
            counts[new] = counts.get(new, 0) + 1
            # Deux actions confondues par la réécriture sont numérotées dans l'ordre admissible
            surface.append(new if counts[new] == 1 else f"{new} #{counts[new]}")
        self._to_engine = dict(zip(surface, observation.admissible_actions, strict=True))
        return Observation(
            text=self.transform(observation.text), admissible_actions=tuple(surface)
        )

    def reset(self) -> Observation:
        """Réinitialise la partie."""
        return self._wrap(self.env.reset())

    def step(self, action: str) -> StepResult:
        """Joue une action sous sa forme perturbée.

        Raises:
            InadmissibleActionError: Si l'action n'est pas dans la liste perturbée courante
        """
        engine_action = self._to_engine.get(action)
        if engine_action is None:
            raise InadmissibleActionError(action)
        result = self.env.step(engine_action)
        return StepResult(
            observation=self._wrap(result.observation),
            reward=result.reward,
            done=result.done,
            truncated=result.truncated,
            score=result.score,
        )


def wrap_env(
    spec: GameSpec,
    mode: PerturbMode,
    lexicon: Optional[Lexicon] = None,
    seed: int = 0,
    rate: float = 1.0,
) -> Environment:
    """Environnement pour un mode de perturbation; `none` rend l'environnement brut."""
    if mode == PerturbMode.NONE:
        return GameEnv(spec)
    return PerturbedEnv(spec, mode, lexicon=lexicon, seed=seed, rate=rate)


def ood_vocab_env(
    spec_seed: int,
    difficulty: Difficulty,
    pool: ConceptPool,
    max_steps: int = DEFAULT_MAX_STEPS,
    template_set_id: int = 0,
) -> GameEnv:
    """Partie au vocabulaire OOD: mêmes concepts et même structure, noms inédits."""
    spec = generate_game(
        difficulty,
        spec_seed,
        pool,
        vocab_mode=VocabMode.OOD,
        max_steps=max_steps,
        template_set_id=template_set_id,
    )
    return GameEnv(spec)
