"""Gestion de la configuration de Degen Lab."""

import os
import sys
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .logger import logger
from .models import Difficulty, EncoderKind, PerturbMode

# Emplacements de configuration par ordre de priorité
CONFIG_LOCATIONS = [
    Path.cwd() / "degen-lab.toml",  # Répertoire courant
    Path.cwd() / ".degen-lab.toml",  # Répertoire courant (caché)
    Path.home() / ".config" / "degen-lab" / "config.toml",  # XDG config
]

ENV_PREFIX = "DEGEN_"


def find_config_file() -> Optional[Path]:
    """Trouve le fichier de configuration TOML."""
    for path in CONFIG_LOCATIONS:
        if path.exists():
            return path
    return None


def _read_toml(path: Path) -> dict[str, Any]:
    if sys.version_info >= (3, 11):
        import tomllib

        with open(path, "rb") as f:
            return tomllib.load(f)
    else:
        import tomli

        with open(path, "rb") as f:
            return tomli.load(f)


def load_toml_config(config_path: Optional[Path] = None) -> dict[str, Any]:
    """Charge la configuration depuis un fichier TOML.

    Un fichier donné explicitement doit exister et être valide; un fichier trouvé
    dans les emplacements par défaut est ignoré (avec un avertissement) s'il est illisible.

    Raises:
        ValueError: Si le fichier explicite est absent ou invalide
    """
    if config_path is not None:
        if not config_path.exists():
            raise ValueError(f"Fichier de configuration introuvable: {config_path}")
        try:
            return _read_toml(config_path)
        except Exception as e:
            raise ValueError(f"Fichier de configuration invalide {config_path}: {e}") from e

    found = find_config_file()
    if not found:
        return {}
    try:
        return _read_toml(found)
    except Exception as e:
        logger.warning(f"Configuration {found} ignorée: {e}")
        return {}


class AgentConfig(BaseModel):
    """Hyperparamètres de l'agent DRRN."""

    gamma: float = Field(default=0.9, gt=0, le=1, description="Facteur d'actualisation")
    lr: float = Field(default=1e-3, gt=0, description="Taux d'apprentissage Adam")
    beta1: float = Field(default=0.9, ge=0, lt=1, description="Adam β1")
    beta2: float = Field(default=0.999, ge=0, lt=1, description="Adam β2")
    eps: float = Field(default=1e-8, gt=0, description="Adam ε")
    batch_size: int = Field(default=32, ge=1, description="Transitions par lot")
    replay_capacity: int = Field(default=10_000, ge=1, description="Capacité de la mémoire")
    warmup_transitions: int = Field(
        default=100, ge=1, description="Transitions avant le premier pas d'apprentissage"
    )
    train_every: int = Field(
        default=1, ge=1, description="Pas d'environnement entre deux mises à jour"
    )
    fine_tune_encoder: bool = Field(
        default=False, description="Rétropropager dans l'encodeur (si non gelé)"
    )
    seed: int = Field(default=0, ge=0, description="Graine de l'agent")


class ExperimentConfig(BaseSettings):
    """Configuration d'une expérience.

    Variables d'environnement supportées (préfixe DEGEN_), par exemple :
    - DEGEN_DIFFICULTY : easy, medium ou hard
    - DEGEN_EPISODES : nombre d'épisodes d'entraînement
    - DEGEN_OUT_DIR : répertoire des résultats
    """

    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Parties
    difficulty: Difficulty = Field(default=Difficulty.MEDIUM, description="Difficulté")
    n_train_games: int = Field(default=5, ge=1, description="Parties d'entraînement")
    n_eval_games_id: int = Field(default=5, ge=1, description="Parties d'évaluation ID")
    n_eval_games_ood: int = Field(default=5, ge=1, description="Parties d'évaluation OOD")
    game_seed: int = Field(default=0, ge=0, description="Graine de base des parties")
    max_steps: int = Field(default=50, ge=1, description="Pas maximum par épisode")
    template_set_id: int = Field(
        default=0, ge=0, description="Famille de templates d'entraînement"
    )

    # Protocole
    episodes: int = Field(default=100, ge=1, description="Épisodes d'entraînement par run")
    n_runs: int = Field(default=5, ge=1, description="Runs par encodeur")
    seed: int = Field(default=0, ge=0, description="Graine de base des runs")
    seeds: list[int] = Field(
        default_factory=list, description="Graines explicites (sinon seed..seed+n_runs-1)"
    )
    encoders: list[EncoderKind] = Field(
        default_factory=lambda: list(EncoderKind), description="Encodeurs comparés"
    )
    perturb_modes: list[PerturbMode] = Field(
        default_factory=lambda: list(PerturbMode), description="Perturbations évaluées"
    )
    agent: AgentConfig = Field(default_factory=AgentConfig)

    # Encodeurs
    embedding_dim: int = Field(default=50, ge=2, description="Dimension des plongements")
    hidden_size: int = Field(default=64, ge=1, description="Taille cachée des GRU")
    hash_salt: int = Field(default=0, description="Sel de l'encodeur par hachage")
    embeddings_path: Optional[Path] = Field(
        default=None, description="Fichier GloVe réel (sinon pré-entraînement synthétique)"
    )
    pretrain_seed: int = Field(
        default=1234, description="Graine du pré-entraînement synthétique"
    )

    # Perturbations
    lexicon_path: Optional[Path] = Field(default=None, description="Lexique (sinon celui livré)")
    substitution_rate: float = Field(default=1.0, gt=0, le=1, description="Taux de substitution")

    # Exécution
    out_dir: Path = Field(default=Path("results"), description="Répertoire des résultats")
    max_workers: int = Field(default=4, ge=1, le=32, description="Runs en parallèle (1-32)")

    # Logging
    log_file: str = Field(default="", description="Fichier de log (vide = pas de fichier)")
    verbose: bool = Field(default=False, description="Mode verbeux")
    debug: bool = Field(default=False, description="Mode debug")

    @field_validator("out_dir")
    @classmethod
    def validate_out_dir(cls, v: Path) -> Path:
        """Convertit en Path absolu."""
        return v.expanduser().resolve()

    @field_validator("embeddings_path", "lexicon_path")
    @classmethod
    def validate_optional_path(cls, v: Optional[Path]) -> Optional[Path]:
        """Développe ~ dans les chemins optionnels."""
        return v.expanduser() if v is not None else None

    @field_validator("encoders", "perturb_modes")
    @classmethod
    def validate_non_empty(cls, v: list[Any]) -> list[Any]:
        """Refuse les listes vides et les doublons (ordre conservé)."""
        if not v:
            raise ValueError("la liste ne peut pas être vide")
        return list(dict.fromkeys(v))

    @model_validator(mode="after")
    def validate_seeds(self) -> "ExperimentConfig":
        """Vérifie que les graines des runs sont distinctes et en nombre n_runs."""
        seeds = self.run_seeds
        if len(set(seeds)) != len(seeds):
            raise ValueError(f"graines de runs non distinctes: {seeds}")
        if len(seeds) != self.n_runs:
            raise ValueError(f"{len(seeds)} graine(s) pour n_runs={self.n_runs}")
        return self

    @property
    def run_seeds(self) -> list[int]:
        """Graines des runs: explicites, sinon seed..seed+n_runs-1."""
        return list(self.seeds) if self.seeds else list(range(self.seed, self.seed + self.n_runs))

    def create_out_dir(self) -> None:
        """Crée le répertoire des résultats s'il n'existe pas."""
        self.out_dir.mkdir(parents=True, exist_ok=True)


def load_config(config_path: Optional[Path] = None, **overrides: Any) -> ExperimentConfig:
    """Charge la configuration avec priorité aux arguments CLI.

    Ordre de priorité (du plus faible au plus fort) :
    1. Valeurs par défaut
    2. Variables d'environnement (DEGEN_*)
    3. Fichier TOML (racine + section [agent])
    4. Arguments CLI (valeurs None ignorées; `agent` accepte un dict partiel)

    Raises:
        ValueError: Si la configuration finale est invalide
    """
    values = ExperimentConfig().model_dump()
    agent_values = dict(values.pop("agent"))

    toml_config = load_toml_config(config_path)
    known = set(ExperimentConfig.model_fields)
    for key, value in toml_config.items():
        if key == "agent" and isinstance(value, dict):
            agent_values.update(value)
        elif key in known:
            values[key] = value
        else:
            logger.warning(f"Clé de configuration inconnue ignorée: {key}")

    for key, value in overrides.items():
        if value is None:
            continue
        if key == "agent":
            agent_values.update(value)
        else:
            values[key] = value

    if values.get("debug"):
        values["verbose"] = True  # debug implique verbose

    return ExperimentConfig.model_validate({**values, "agent": agent_values})


def debug_config(config_path: Optional[Path] = None) -> dict[str, Any]:
    """Retourne les informations de debug sur la configuration."""
    return {
        "config_file_explicit": str(config_path) if config_path else None,
        "config_file_found": str(find_config_file()) if find_config_file() else None,
        "config_locations": [str(path) for path in CONFIG_LOCATIONS],
        "env_vars": {
            key: value for key, value in sorted(os.environ.items()) if key.startswith(ENV_PREFIX)
        },
    }
