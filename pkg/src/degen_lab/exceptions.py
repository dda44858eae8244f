"""Exceptions du laboratoire.

Chaque erreur spécifique hérite aussi de l'exception standard correspondante,
ce qui permet aux appelants d'intercepter l'une ou l'autre.
"""

from typing import Optional


class LabError(Exception):
    """Erreur de base de Degen Lab."""


class PoolError(LabError, ValueError):
    """Pool de concepts invalide (noms vides, partagés ou cible inconnue)."""


class PoolExhaustedError(LabError, ValueError):
    """Le pool de concepts ne suffit pas pour la difficulté demandée."""


class InadmissibleActionError(LabError, ValueError):
    """Action absente de la liste des actions admissibles (bug du harnais)."""

    def __init__(self, action: str) -> None:
        super().__init__(f"Action non admissible: {action!r}")
        self.action = action


class GameOverError(LabError, RuntimeError):
    """Action soumise après la fin de l'épisode."""


class UnknownTemplateSetError(LabError, KeyError):
    """Famille de templates inconnue."""

    def __init__(self, template_set_id: int) -> None:
        super().__init__(f"Famille de templates inconnue: {template_set_id}")
        self.template_set_id = template_set_id


class MissingAlternateError(LabError, ValueError):
    """Aucune famille de templates alternative pour la paraphrase."""


class EmbeddingParseError(LabError, ValueError):
    """Ligne mal formée dans un fichier d'embeddings."""

    def __init__(self, message: str, line_number: Optional[int] = None) -> None:
        prefix = f"ligne {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")
        self.line_number = line_number


class InconsistentDimensionError(EmbeddingParseError):
    """Dimensions différentes entre les lignes d'un fichier d'embeddings."""


class DimensionMismatchError(LabError, ValueError):
    """Formes incompatibles entre entrées et poids."""


class NumericFaultError(LabError, ArithmeticError):
    """NaN ou Inf détecté dans un calcul numérique."""


class EmptyInputError(LabError, ValueError):
    """Entrée vide là où au moins un élément est requis."""


class ScoreDomainError(LabError, ValueError):
    """Score maximal nul ou score hors bornes."""


class VocabMismatchError(LabError, ValueError):
    """Deux instantanés d'embeddings ne partagent pas le même vocabulaire."""


class LexiconError(LabError, ValueError):
    """Lexique de substitution invalide."""


class CheckpointError(LabError, ValueError):
    """Checkpoint illisible ou incomplet."""
