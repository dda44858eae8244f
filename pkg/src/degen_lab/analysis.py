"""Agrégation des scores, rapport de dérive sémantique et projection 2D."""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import EmptyInputError
from .models import EpisodeResult, EvalRecord
from .textenc import (
    UNK_TOKEN,
    EmbeddingTable,
    TrainingCorpus,
    cosine_distance,
    embedding_drift,
    nearest_neighbours,
)

GROUP_KEYS = ["encoder", "game_set", "mode"]
EVAL_COLUMNS = [
    "encoder",
    "run_seed",
    "game_set",
    "mode",
    "game_id",
    "score",
    "max_score",
    "normalized_score",
    "moves",
]
EPISODE_COLUMNS = [
    "run_seed",
    "episode",
    "game_id",
    "score",
    "max_score",
    "normalized_score",
    "moves",
    "mean_loss",
]
PARTITIONS = ("rewarded", "unrewarded", "never")


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    """Écrit un tableau CSV stable (flottants à 6 décimales, fins de ligne \\n)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


# ============================================================================
# TABLEAUX DE RÉSULTATS
# ============================================================================


def eval_frame(records: Iterable[EvalRecord]) -> pd.DataFrame:
    """Lignes d'évaluation sous forme de DataFrame (énumérations en texte)."""
    rows = [
        {
            "encoder": record.encoder.value,
            "run_seed": record.run_seed,
            "game_set": record.game_set.value,
            "mode": record.mode.value,
            "game_id": record.game_id,
            "score": record.score,
            "max_score": record.max_score,
            "normalized_score": record.normalized_score,
            "moves": record.moves,
        }
        for record in records
    ]
    return pd.DataFrame(rows, columns=EVAL_COLUMNS)


def episode_frame(episodes: Iterable[EpisodeResult], run_seed: int) -> pd.DataFrame:
    """Métriques par épisode d'un run."""
    rows = [
        {
            "run_seed": run_seed,
            "episode": result.episode,
            "game_id": result.game_id,
            "score": result.score,
            "max_score": result.max_score,
            "normalized_score": result.normalized_score,
            "moves": result.moves,
            "mean_loss": result.mean_loss,
        }
        for result in episodes
    ]
    return pd.DataFrame(rows, columns=EPISODE_COLUMNS)


def format_mean_std(mean: float, std: float) -> str:
    """Format « 0.58 ± 0.06 »."""
    return f"{mean:.2f} ± {std:.2f}"


def aggregate(records: pd.DataFrame) -> pd.DataFrame:
    """Moyenne ± écart-type (n − 1) entre runs du score normalisé et des pas.

    Chaque run est d'abord réduit à sa moyenne sur les parties du jeu évalué.
    Un seul run donne un écart-type 0, signalé par `single_run`. Le résultat
    ne dépend pas de l'ordre des lignes d'entrée.

    Args:
        records: Lignes d'évaluation (colonnes EVAL_COLUMNS)

    Raises:
        EmptyInputError: Si aucune ligne n'est fournie
    """
    if records.empty:
        raise EmptyInputError("aucun résultat à agréger")

    ordered = records.sort_values(GROUP_KEYS + ["run_seed", "game_id"], kind="mergesort")
    per_run = (
        ordered.groupby(GROUP_KEYS + ["run_seed"], sort=True)
        .agg(score=("normalized_score", "mean"), moves=("moves", "mean"))
        .reset_index()
    )
    summary = (
        per_run.groupby(GROUP_KEYS, sort=True)
        .agg(
            score_mean=("score", "mean"),
            score_std=("score", "std"),
            moves_mean=("moves", "mean"),
            moves_std=("moves", "std"),
            n_runs=("run_seed", "nunique"),
        )
        .reset_index()
    )
    summary[["score_std", "moves_std"]] = summary[["score_std", "moves_std"]].fillna(0.0)
    summary["single_run"] = summary["n_runs"] == 1
    summary["score"] = [
        format_mean_std(m, s) for m, s in zip(summary["score_mean"], summary["score_std"])
    ]
    summary["moves"] = [
        format_mean_std(m, s) for m, s in zip(summary["moves_mean"], summary["moves_std"])
    ]
    return summary


def learning_curves(episodes: pd.DataFrame) -> pd.DataFrame:
    """Moyenne et écart-type entre runs, par (encodeur, épisode), du score et des pas.

    Args:
        episodes: Lignes par épisode avec une colonne `encoder`
    """
    if episodes.empty:
        raise EmptyInputError("aucun épisode")
    ordered = episodes.sort_values(["encoder", "episode", "run_seed"], kind="mergesort")
    curves = (
        ordered.groupby(["encoder", "episode"], sort=True)
        .agg(
            score_mean=("normalized_score", "mean"),
            score_std=("normalized_score", "std"),
            moves_mean=("moves", "mean"),
            moves_std=("moves", "std"),
            n_runs=("run_seed", "nunique"),
        )
        .reset_index()
    )
    curves[["score_std", "moves_std"]] = curves[["score_std", "moves_std"]].fillna(0.0)
    return curves


# ============================================================================
# DÉRIVE SÉMANTIQUE
# ============================================================================


@dataclass
class DriftReport:
    """Dérive des plongements entre deux instantanés."""

    tokens: pd.DataFrame
    partition_means: dict[str, float]
    partition_sizes: dict[str, int]
    top: list[tuple[str, float]]
    pairs: pd.DataFrame
    neighbours: pd.DataFrame = field(default_factory=pd.DataFrame)

    def drift(self, token: str) -> float:
        """Dérive d'un jeton."""
        return float(self.tokens.loc[self.tokens["token"] == token, "drift"].iloc[0])


def _corpus_tokens(tokens: set[str], vocab: dict[str, int]) -> set[str]:
    # Un jeton hors vocabulaire a utilisé la ligne inconnue
    return {token if token in vocab else UNK_TOKEN for token in tokens}


def drift_report(
    start: EmbeddingTable,
    end: EmbeddingTable,
    corpus: TrainingCorpus,
    top_k: int = 10,
    pairs: Sequence[tuple[str, str]] = (),
    neighbours_k: int = 5,
) -> DriftReport:
    """Compare deux instantanés d'une même table.

    Les jetons sont répartis en trois groupes disjoints couvrant le vocabulaire:
    vus dans une transition récompensée, vus seulement sans récompense, jamais vus.

    Args:
        start: Instantané de début
        end: Instantané de fin
        corpus: Jetons vus pendant l'entraînement
        top_k: Nombre de jetons les plus dérivés à lister
        pairs: Paires dont on compare la distance cosinus avant/après
        neighbours_k: Voisins listés pour chaque jeton du top

    Raises:
        VocabMismatchError: Si les vocabulaires ou dimensions diffèrent
    """
    drift = embedding_drift(end, reference=start)
    rewarded = _corpus_tokens(corpus.rewarded, start.vocab)
    seen = _corpus_tokens(corpus.seen, start.vocab) | rewarded

    rows = []
    for token in sorted(start.vocab):
        distance, degenerate = drift[token].distance, drift[token].degenerate
        if token in rewarded:
            partition = "rewarded"
        elif token in seen:
            partition = "unrewarded"
        else:
            partition = "never"
        rows.append(
            {"token": token, "partition": partition, "drift": distance, "degenerate": degenerate}
        )
    tokens = pd.DataFrame(rows, columns=["token", "partition", "drift", "degenerate"])

    partition_means: dict[str, float] = {}
    partition_sizes: dict[str, int] = {}
    for name in PARTITIONS:
        values = tokens.loc[tokens["partition"] == name, "drift"]
        partition_sizes[name] = int(len(values))
        partition_means[name] = float(values.mean()) if len(values) else 0.0

    ranked = tokens.sort_values(["drift", "token"], ascending=[False, True], kind="mergesort")
    top = [(str(t), float(d)) for t, d in zip(ranked["token"][:top_k], ranked["drift"][:top_k])]

    pair_rows = []
    for x, y in pairs:
        before = cosine_distance(start.vector(x), start.vector(y))
        after = cosine_distance(end.vector(x), end.vector(y))
        pair_rows.append({"x": x, "y": y, "before": before, "after": after})
    pair_frame = pd.DataFrame(pair_rows, columns=["x", "y", "before", "after"])

    neighbour_rows = []
    for token, _ in top:
        neighbour_rows.append(
            {
                "token": token,
                "before": " ".join(t for t, _ in nearest_neighbours(start, token, neighbours_k)),
                "after": " ".join(t for t, _ in nearest_neighbours(end, token, neighbours_k)),
            }
        )
    neighbours = pd.DataFrame(neighbour_rows, columns=["token", "before", "after"])

    return DriftReport(
        tokens=tokens,
        partition_means=partition_means,
        partition_sizes=partition_sizes,
        top=top,
        pairs=pair_frame,
        neighbours=neighbours,
    )


def write_drift_report(report: DriftReport, out_dir: Path) -> list[Path]:
    """Écrit les CSV du rapport de dérive et retourne leurs chemins."""
    partitions = pd.DataFrame(
        [
            {"partition": name, "tokens": report.partition_sizes[name], "mean_drift": mean}
            for name, mean in report.partition_means.items()
        ]
    )
    outputs = {
        "drift_tokens.csv": report.tokens,
        "drift_partitions.csv": partitions,
        "drift_pairs.csv": report.pairs,
        "drift_neighbours.csv": report.neighbours,
    }
    paths = []
    for name, frame in outputs.items():
        write_csv(frame, out_dir / name)
        paths.append(out_dir / name)
    return paths


# ============================================================================
# PROJECTION 2D
# ============================================================================


@dataclass
class Projection:
    """Coordonnées 2D étiquetées."""

    labels: list[str]
    coords: np.ndarray
    degenerate: bool = False

    def frame(self) -> pd.DataFrame:
        """Tableau label, x, y."""
        return pd.DataFrame(
            {"label": self.labels, "x": self.coords[:, 0], "y": self.coords[:, 1]},
            columns=["label", "x", "y"],
        )


def project_2d(vectors: np.ndarray, labels: Sequence[str]) -> Projection:
    """ACP centrée sur les deux premières composantes.

    Chaque composante est orientée pour que son coefficient de plus grande
    magnitude soit positif. Des vecteurs tous identiques donnent des coordonnées
    nulles marquées dégénérées.

    Raises:
        ValueError: Moins de 3 vecteurs ou étiquettes en nombre différent
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 3:
        raise ValueError(f"Au moins 3 vecteurs requis, reçu {vectors.shape}")
    if len(labels) != vectors.shape[0]:
        raise ValueError(f"{len(labels)} étiquettes pour {vectors.shape[0]} vecteurs")

    centered = vectors - vectors.mean(axis=0)
    if not np.any(centered):
        return Projection(list(labels), np.zeros((vectors.shape[0], 2)), degenerate=True)

    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = np.zeros((2, vectors.shape[1]))
    count = min(2, vt.shape[0])
    components[:count] = vt[:count]
    for row in components:
        if np.any(row) and row[int(np.argmax(np.abs(row)))] < 0:
            row *= -1.0
    return Projection(list(labels), centered @ components.T)


def write_projection(projection: Projection, path: Path) -> None:
    """Écrit les coordonnées (label, x, y) en CSV."""
    write_csv(projection.frame(), path)


def write_vectors(vectors: np.ndarray, labels: Sequence[str], path: Path) -> None:
    """Exporte les vecteurs bruts (label puis coordonnées) pour un t-SNE externe."""
    frame = pd.DataFrame(np.asarray(vectors), columns=[f"v{i}" for i in range(vectors.shape[1])])
    frame.insert(0, "label", list(labels))
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, sep="\t", lineterminator="\n")
