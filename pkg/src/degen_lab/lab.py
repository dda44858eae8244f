"""Orchestration des expériences: suites de parties, runs parallèles, sorties."""

import io
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, TypeVar

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .agent import DRRNAgent, load_checkpoint, play_episode, save_checkpoint
from .analysis import (
    DriftReport,
    Projection,
    aggregate,
    drift_report,
    episode_frame,
    eval_frame,
    learning_curves,
    project_2d,
    write_csv,
    write_drift_report,
    write_projection,
    write_vectors,
)
from .concepts import load_concept_pool
from .config import AgentConfig, ExperimentConfig
from .engine import DIFFICULTY_RULES, GameEnv, generate_game, normalized_score, save_game_spec
from .exceptions import InadmissibleActionError
from .logger import logger, run_tag
from .models import (
    ConceptPool,
    Difficulty,
    EncoderKind,
    Environment,
    EpisodeResult,
    EvalRecord,
    GameSet,
    GameSpec,
    PerturbMode,
    PolicyMode,
    RunResult,
    VocabMode,
)
from .perturb import Lexicon, load_lexicon, wrap_env
from .textenc import (
    UNK_TOKEN,
    EmbeddingEncoder,
    EmbeddingTable,
    EncoderParams,
    HashEncoder,
    TextEncoder,
    TrainingCorpus,
    load_embedding_file,
    synth_pretrain,
    write_embedding_file,
)

T = TypeVar("T")

# Décalages de graine entre jeux de parties
ID_SEED_OFFSET = 100
OOD_SEED_OFFSET = 200
ENCODER_STREAM = 7

RUNS_DIR = "runs"
CHECKPOINT_DIR = "checkpoint"
SNAPSHOT_START = "embedding_start.txt"
SNAPSHOT_END = "embedding_end.txt"
CORPUS_FILE = "corpus.json"
QUIT_COMMANDS = frozenset({"q", "quit", "exit"})


# ============================================================================
# SUITES DE PARTIES ET ENCODEURS
# ============================================================================


@dataclass
class GameSuite:
    """Parties d'entraînement, d'évaluation ID et d'évaluation OOD."""

    train: list[GameSpec]
    id: list[GameSpec]
    ood: list[GameSpec]

    def games(self, game_set: GameSet) -> list[GameSpec]:
        """Parties d'un jeu."""
        return {GameSet.TRAIN: self.train, GameSet.ID: self.id, GameSet.OOD: self.ood}[game_set]


def training_pool(
    pool: ConceptPool, train: Sequence[GameSpec], difficulty: Difficulty
) -> ConceptPool:
    """Pool réduit aux concepts des parties d'entraînement (vocabulaire ID).

    Si ces concepts ne suffisent pas à la difficulté, le pool complet est rendu.
    """
    seen = {obj.concept_id for spec in train for obj in spec.objects}
    concepts = tuple(concept for concept in pool.concepts if concept.id in seen)
    if len(concepts) < DIFFICULTY_RULES[difficulty].objects[1]:
        logger.warning(
            f"{len(concepts)} concept(s) vus à l'entraînement: parties ID tirées du pool complet"
        )
        return pool
    return replace(pool, concepts=concepts)


def build_suite(config: ExperimentConfig, pool: ConceptPool) -> GameSuite:
    """Génère les trois jeux de parties à partir de game_seed.

    Les parties ID et OOD ont des graines disjointes de celles d'entraînement.
    Les parties ID ne placent que des objets déjà rencontrés à l'entraînement.
    """

    def batch(count: int, offset: int, mode: VocabMode, source: ConceptPool) -> list[GameSpec]:
        return [
            generate_game(
                config.difficulty,
                config.game_seed + offset + i,
                source,
                vocab_mode=mode,
                max_steps=config.max_steps,
                template_set_id=config.template_set_id,
            )
            for i in range(count)
        ]

    train = batch(config.n_train_games, 0, VocabMode.ID, pool)
    return GameSuite(
        train=train,
        id=batch(
            config.n_eval_games_id,
            ID_SEED_OFFSET,
            VocabMode.ID,
            training_pool(pool, train, config.difficulty),
        ),
        ood=batch(config.n_eval_games_ood, OOD_SEED_OFFSET, VocabMode.OOD, pool),
    )


def build_table(config: ExperimentConfig, pool: ConceptPool) -> EmbeddingTable:
    """Table pré-entraînée: fichier GloVe fourni, sinon pré-entraînement synthétique."""
    if config.embeddings_path is not None:
        logger.info(f"Plongements chargés depuis {config.embeddings_path}")
        return load_embedding_file(config.embeddings_path)
    return synth_pretrain(pool, config.embedding_dim, config.pretrain_seed)


def build_encoder(
    kind: EncoderKind, seed: int, config: ExperimentConfig, table: EmbeddingTable
) -> TextEncoder:
    """Encodeur d'un run; la table est copiée pour que chaque run ait la sienne."""
    if kind == EncoderKind.HASH:
        return HashEncoder(config.hidden_size, config.hash_salt)
    rng = np.random.default_rng(np.random.SeedSequence([seed, ENCODER_STREAM]))
    params = EncoderParams.initialise(
        table.copy(), config.hidden_size, rng, frozen=kind == EncoderKind.EMBEDDING_FROZEN
    )
    return EmbeddingEncoder(params)


def agent_config_for(kind: EncoderKind, seed: int, config: ExperimentConfig) -> AgentConfig:
    """Hyperparamètres d'un run: graine du run, réglage fin selon l'encodeur."""
    return config.agent.model_copy(
        update={"seed": seed, "fine_tune_encoder": kind == EncoderKind.EMBEDDING_FINETUNED}
    )


def run_dir(out_dir: Path, kind: EncoderKind, seed: int) -> Path:
    """Répertoire des sorties d'un run."""
    return out_dir / RUNS_DIR / kind.value / f"seed_{seed}"


def eval_targets(perturb_modes: Sequence[PerturbMode]) -> list[tuple[GameSet, PerturbMode]]:
    """Jeux évalués: parties d'entraînement sous chaque perturbation, puis ID et OOD bruts."""
    targets = [(GameSet.TRAIN, mode) for mode in perturb_modes]
    return targets + [(GameSet.ID, PerturbMode.NONE), (GameSet.OOD, PerturbMode.NONE)]


# ============================================================================
# ENTRAÎNEMENT ET ÉVALUATION
# ============================================================================


def train_agent(agent: DRRNAgent, specs: Sequence[GameSpec], episodes: int) -> list[EpisodeResult]:
    """Entraîne l'agent en parcourant les parties en boucle (politique échantillonnée)."""
    results = []
    for episode in range(episodes):
        env = GameEnv(specs[episode % len(specs)])
        results.append(play_episode(env, agent, PolicyMode.SAMPLE, learn=True, episode=episode))
    return results


def evaluate_agent(
    agent: DRRNAgent,
    suite: GameSuite,
    targets: Sequence[tuple[GameSet, PerturbMode]],
    kind: EncoderKind,
    run_seed: int,
    lexicon: Optional[Lexicon] = None,
    substitution_rate: float = 1.0,
) -> list[EvalRecord]:
    """Évaluation gloutonne, sans apprentissage, de chaque partie de chaque cible."""
    records = []
    for game_set, mode in targets:
        for spec in suite.games(game_set):
            env = wrap_env(spec, mode, lexicon=lexicon, seed=run_seed, rate=substitution_rate)
            result = play_episode(env, agent, PolicyMode.GREEDY)
            records.append(
                EvalRecord(
                    encoder=kind,
                    run_seed=run_seed,
                    game_set=game_set,
                    mode=mode,
                    game_id=result.game_id,
                    score=result.score,
                    max_score=result.max_score,
                    normalized_score=result.normalized_score,
                    moves=result.moves,
                )
            )
    return records


# ============================================================================
# RÉSUMÉS
# ============================================================================


def summary_table(summary: pd.DataFrame, title: str = "Scores normalisés") -> Table:
    """Tableau Rich d'un résumé agrégé."""
    table = Table(title=title, show_header=True)
    table.add_column("Encodeur", style="cyan")
    table.add_column("Jeu")
    table.add_column("Perturbation")
    table.add_column("Score", justify="right")
    table.add_column("Pas", justify="right")
    table.add_column("Runs", justify="right")
    for row in summary.itertuples(index=False):
        runs = f"{row.n_runs}" + (" [dim](seul)[/dim]" if row.single_run else "")
        table.add_row(row.encoder, row.game_set, row.mode, row.score, row.moves, runs)
    return table


def write_summary_text(
    summary: pd.DataFrame, path: Path, title: str = "Scores normalisés"
) -> None:
    """Écrit la version lisible du résumé (rendu Rich sans couleurs)."""
    console = Console(record=True, file=io.StringIO(), width=110, color_system=None)
    console.print(summary_table(summary, title))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(console.export_text(), encoding="utf-8")


@dataclass
class ExperimentResult:
    """Sorties d'une expérience complète."""

    runs: list[RunResult]
    evaluations: pd.DataFrame
    summary: pd.DataFrame
    curves: pd.DataFrame = field(default_factory=pd.DataFrame)
    files: list[Path] = field(default_factory=list)


def _tagged(worker: Callable[[EncoderKind, int], T], kind: EncoderKind, seed: int) -> T:
    with run_tag(f"{kind.value}/{seed}"):
        return worker(kind, seed)


# ============================================================================
# RUNNER
# ============================================================================


class ExperimentRunner:
    """Exécute le protocole d'entraînement et d'évaluation sur tous les encodeurs et graines."""

    def __init__(self, config: ExperimentConfig, pool: Optional[ConceptPool] = None) -> None:
        """Initialise le runner.

        Args:
            config: Configuration de l'expérience
            pool: Pool de concepts (défaut: pool livré)
        """
        self.config = config
        self.pool = pool if pool is not None else load_concept_pool()
        self.suite = build_suite(config, self.pool)
        self.table = build_table(config, self.pool)
        self.lexicon = load_lexicon(config.lexicon_path)

    def jobs(self) -> list[tuple[EncoderKind, int]]:
        """Couples (encodeur, graine) à exécuter, dans l'ordre de la configuration."""
        return [(kind, seed) for kind in self.config.encoders for seed in self.config.run_seeds]

    def run_one(self, kind: EncoderKind, seed: int) -> RunResult:
        """Entraîne puis évalue un agent; écrit les sorties du run.

        Args:
            kind: Encodeur
            seed: Graine du run
        """
        directory = run_dir(self.config.out_dir, kind, seed)
        directory.mkdir(parents=True, exist_ok=True)
        encoder = build_encoder(kind, seed, self.config, self.table)
        agent = DRRNAgent(encoder, agent_config_for(kind, seed, self.config))
        result = RunResult(encoder=kind, run_seed=seed)

        if isinstance(encoder, EmbeddingEncoder):
            result.snapshot_start = directory / SNAPSHOT_START
            write_embedding_file(encoder.params.embedding, result.snapshot_start)

        result.episodes = train_agent(agent, self.suite.train, self.config.episodes)

        if isinstance(encoder, EmbeddingEncoder):
            result.snapshot_end = directory / SNAPSHOT_END
            write_embedding_file(encoder.params.embedding, result.snapshot_end)
        result.corpus_path = directory / CORPUS_FILE
        agent.corpus.save(result.corpus_path)
        result.checkpoint_dir = directory / CHECKPOINT_DIR
        save_checkpoint(agent, result.checkpoint_dir)

        result.evaluations = evaluate_agent(
            agent,
            self.suite,
            eval_targets(self.config.perturb_modes),
            kind,
            seed,
            self.lexicon,
            self.config.substitution_rate,
        )
        write_csv(episode_frame(result.episodes, seed), directory / "episodes.csv")
        write_csv(eval_frame(result.evaluations), directory / "eval.csv")
        return result

    def evaluate_one(
        self, kind: EncoderKind, seed: int, targets: Sequence[tuple[GameSet, PerturbMode]]
    ) -> list[EvalRecord]:
        """Recharge le checkpoint d'un run et l'évalue sur les cibles données.

        Raises:
            CheckpointError: Si le checkpoint est absent ou incohérent
        """
        directory = run_dir(self.config.out_dir, kind, seed) / CHECKPOINT_DIR
        agent = load_checkpoint(directory, agent_config_for(kind, seed, self.config))
        return evaluate_agent(
            agent,
            self.suite,
            targets,
            kind,
            seed,
            self.lexicon,
            self.config.substitution_rate,
        )

    def _run_parallel(
        self,
        worker: Callable[[EncoderKind, int], T],
        progress_callback: Optional[Callable[[str], None]] = None,
    ) -> list[T]:
        """Exécute `worker` sur chaque couple (encodeur, graine) en parallèle.

        Les résultats suivent l'ordre de `jobs()`. Une erreur est journalisée puis
        relancée une fois tous les runs terminés.
        """
        jobs = self.jobs()
        results: dict[tuple[EncoderKind, int], T] = {}
        failure: Optional[BaseException] = None
        completed = 0
        total = len(jobs)

        with ThreadPoolExecutor(max_workers=self.config.max_workers) as executor:
            future_to_job = {
                executor.submit(_tagged, worker, kind, seed): (kind, seed) for kind, seed in jobs
            }
            for future in as_completed(future_to_job):
                kind, seed = future_to_job[future]
                completed += 1
                try:
                    results[(kind, seed)] = future.result()
                    logger.info(f"✓ [{completed}/{total}] {kind.value} seed={seed}")
                    if progress_callback:
                        progress_callback(f"[{completed}/{total}] {kind.value} seed={seed}")
                except Exception as e:
                    logger.error(f"✗ [{completed}/{total}] {kind.value} seed={seed}: {e}")
                    if failure is None:
                        failure = e

        if failure is not None:
            raise failure
        return [results[job] for job in jobs]

    def run_experiment(
        self, progress_callback: Optional[Callable[[str], None]] = None
    ) -> ExperimentResult:
        """Protocole complet: entraînement, évaluations, agrégation, fichiers de sortie."""
        self.config.create_out_dir()
        jobs = self.jobs()

        logger.info("=" * 70)
        logger.info(
            f"ENTRAÎNEMENT: {len(jobs)} run(s), {self.config.episodes} épisodes, "
            f"{self.config.max_workers} thread(s)"
        )
        logger.info("=" * 70)
        runs = self._run_parallel(self.run_one, progress_callback)

        logger.info("=" * 70)
        logger.info("AGRÉGATION")
        logger.info("=" * 70)
        out = self.config.out_dir
        evaluations = eval_frame(record for run in runs for record in run.evaluations)
        summary = aggregate(evaluations)

        episodes = pd.concat(
            [
                episode_frame(run.episodes, run.run_seed).assign(encoder=run.encoder.value)
                for run in runs
            ],
            ignore_index=True,
        )
        curves = learning_curves(episodes)

        files = [out / "eval.csv", out / "summary.csv", out / "summary.txt", out / "curves.csv"]
        write_csv(evaluations, files[0])
        write_csv(summary, files[1])
        write_summary_text(summary, files[2])
        write_csv(curves, files[3])
        return ExperimentResult(
            runs=runs, evaluations=evaluations, summary=summary, curves=curves, files=files
        )

    def run_evaluation(
        self,
        targets: Sequence[tuple[GameSet, PerturbMode]],
        name: str = "eval",
        progress_callback: Optional[Callable[[str], None]] = None,
    ) -> ExperimentResult:
        """Réévalue les checkpoints d'une expérience déjà entraînée.

        Écrit `<name>.csv`, `<name>_summary.csv` et `<name>_summary.txt`.
        """
        logger.info("=" * 70)
        logger.info(f"ÉVALUATION ({name}): {len(self.jobs())} checkpoint(s)")
        logger.info("=" * 70)
        batches = self._run_parallel(
            lambda kind, seed: self.evaluate_one(kind, seed, targets), progress_callback
        )
        evaluations = eval_frame(record for batch in batches for record in batch)
        summary = aggregate(evaluations)

        out = self.config.out_dir
        files = [out / f"{name}.csv", out / f"{name}_summary.csv", out / f"{name}_summary.txt"]
        write_csv(evaluations, files[0])
        write_csv(summary, files[1])
        write_summary_text(summary, files[2])
        return ExperimentResult(runs=[], evaluations=evaluations, summary=summary, files=files)


def run_experiment(
    config: ExperimentConfig, progress_callback: Optional[Callable[[str], None]] = None
) -> ExperimentResult:
    """Raccourci: construit un runner et exécute le protocole complet."""
    return ExperimentRunner(config).run_experiment(progress_callback)


# ============================================================================
# GÉNÉRATION DE PARTIES
# ============================================================================


def gen_games(
    difficulty: Difficulty,
    count: int,
    seed: int,
    mode: VocabMode,
    out_dir: Path,
    pool: Optional[ConceptPool] = None,
    max_steps: int = 50,
    template_set_id: int = 0,
) -> list[Path]:
    """Écrit `count` parties (graines seed..seed+count-1) en JSON.

    Raises:
        PoolExhaustedError: Si le pool ne suffit pas pour la difficulté
    """
    pool = pool if pool is not None else load_concept_pool()
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        spec = generate_game(
            difficulty,
            seed + i,
            pool,
            vocab_mode=mode,
            max_steps=max_steps,
            template_set_id=template_set_id,
        )
        path = out_dir / f"{spec.game_id}.json"
        save_game_spec(spec, path)
        paths.append(path)
    logger.info(f"{len(paths)} partie(s) écrite(s) dans {out_dir}")
    return paths


# ============================================================================
# SESSION INTERACTIVE
# ============================================================================


@dataclass
class PlayOutcome:
    """Bilan d'une session interactive."""

    score: int
    max_score: int
    moves: int
    quit: bool

    @property
    def normalized_score(self) -> float:
        """Score normalisé."""
        return normalized_score(self.score, self.max_score)


def _read_choice(
    count: int, read: Callable[[str], str], write: Callable[[str], None]
) -> Optional[int]:
    while True:
        try:
            answer = read("> ").strip().lower()
        except EOFError:
            return None
        if answer in QUIT_COMMANDS:
            return None
        if answer.isdigit() and 1 <= int(answer) <= count:
            return int(answer) - 1
        write(f"Choix invalide {answer!r}: entrez un numéro entre 1 et {count} ou q")


def play_session(
    env: Environment, read: Callable[[str], str], write: Callable[[str], None]
) -> PlayOutcome:
    """Joue une partie au clavier.

    Affiche l'observation et les actions numérotées, lit un numéro, joue l'action
    et affiche récompense et score. S'arrête à la fin de l'épisode ou sur « q ».

    Args:
        env: Environnement (brut ou perturbé)
        read: Lecture d'une ligne (reçoit l'invite)
        write: Affichage d'une ligne
    """
    obs = env.reset()
    quit_requested = False
    if env.done:
        write(obs.text)
    while not env.done:
        write(obs.text)
        for number, action in enumerate(obs.admissible_actions, start=1):
            write(f"  {number}. {action}")
        choice = _read_choice(len(obs.admissible_actions), read, write)
        if choice is None:
            quit_requested = True
            break
        try:
            result = env.step(obs.admissible_actions[choice])
        except InadmissibleActionError as e:
            write(str(e))
            continue
        write(f"Récompense: {result.reward}  Score: {result.score}/{env.max_score}")
        obs = result.observation

    outcome = PlayOutcome(
        score=env.score, max_score=env.max_score, moves=env.moves, quit=quit_requested
    )
    write(
        f"Fin de partie: {outcome.score}/{outcome.max_score} "
        f"(normalisé {outcome.normalized_score:.2f}) en {outcome.moves} pas"
    )
    return outcome


# ============================================================================
# DÉRIVE ET PROJECTION
# ============================================================================


def run_drift(
    directory: Path,
    top_k: int = 10,
    pairs: Sequence[tuple[str, str]] = (),
    neighbours_k: int = 5,
) -> tuple[DriftReport, list[Path]]:
    """Rapport de dérive d'un run à partir de ses instantanés et de son corpus.

    Raises:
        ValueError: Si le run n'a pas d'instantané (encodeur par hachage) ou pas de corpus
    """
    start_path, end_path = directory / SNAPSHOT_START, directory / SNAPSHOT_END
    corpus_path = directory / CORPUS_FILE
    for path in (start_path, end_path, corpus_path):
        if not path.exists():
            raise ValueError(f"{path.name} absent de {directory} (encodeur sans plongements ?)")
    report = drift_report(
        load_embedding_file(start_path),
        load_embedding_file(end_path),
        TrainingCorpus.load(corpus_path),
        top_k=top_k,
        pairs=pairs,
        neighbours_k=neighbours_k,
    )
    return report, write_drift_report(report, directory)


def run_snapshots(directory: Path) -> list[tuple[str, Path]]:
    """Instantanés de début et de fin d'un run, nommés « start » et « end ».

    Raises:
        ValueError: Si un instantané manque (encodeur par hachage)
    """
    snapshots = [("start", directory / SNAPSHOT_START), ("end", directory / SNAPSHOT_END)]
    for _, path in snapshots:
        if not path.exists():
            raise ValueError(f"{path.name} absent de {directory} (encodeur sans plongements ?)")
    return snapshots


def run_project(
    snapshots: Sequence[tuple[str, Path]],
    out_dir: Path,
    tokens: Optional[Sequence[str]] = None,
) -> Projection:
    """Projette en 2D les vecteurs de jetons d'un ou plusieurs instantanés.

    Avec plusieurs instantanés, chaque point est étiqueté « jeton@nom ». Écrit
    `projection.csv` et les vecteurs bruts `vectors.tsv`.

    Raises:
        ValueError: Si un jeton manque à un instantané
    """
    tables = [(name, load_embedding_file(path)) for name, path in snapshots]
    if not tables:
        raise ValueError("Aucun instantané à projeter")
    selected = list(tokens) if tokens else [t for t in tables[0][1].tokens if t != UNK_TOKEN]

    vectors, labels = [], []
    for name, table in tables:
        for token in selected:
            if token not in table.vocab:
                raise ValueError(f"Jeton {token!r} absent de l'instantané {name}")
            vectors.append(table.vector(token))
            labels.append(token if len(tables) == 1 else f"{token}@{name}")

    matrix = np.array(vectors)
    projection = project_2d(matrix, labels)
    if projection.degenerate:
        logger.warning("Vecteurs tous identiques: projection dégénérée")
    write_projection(projection, out_dir / "projection.csv")
    write_vectors(matrix, labels, out_dir / "vectors.tsv")
    return projection
