"""Interface en ligne de commande de Degen Lab."""

import sys
import time
from collections.abc import Callable
from pathlib import Path
from typing import Any, Optional

import click
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table
from rich.text import Text

from . import __version__
from .concepts import load_concept_pool
from .config import CONFIG_LOCATIONS, ExperimentConfig, debug_config, find_config_file, load_config
from .engine import generate_game, load_game_spec, save_game_spec
from .lab import (
    ExperimentResult,
    ExperimentRunner,
    eval_targets,
    gen_games,
    play_session,
    run_dir,
    run_drift,
    run_project,
    run_snapshots,
    summary_table,
)
from .logger import logger, setup_logger
from .models import Difficulty, EncoderKind, GameSet, PerturbMode, VocabMode
from .perturb import load_lexicon, wrap_env

console = Console()


# ============================================================================
# GROUPE PRINCIPAL
# ============================================================================


@click.group(invoke_without_command=True)
@click.version_option(version=__version__, prog_name="Degen Lab")
@click.pass_context
def cli(ctx: click.Context) -> None:
    """Degen Lab - Dégénérescence sémantique des encodeurs en RL textuel.

    \b
    Commandes disponibles:
      gen           Générer des parties (JSON)
      train         Entraîner et évaluer tous les encodeurs
      eval          Réévaluer les checkpoints (ID / OOD)
      perturb-eval  Réévaluer sous paraphrase et substitution lexicale
      drift         Rapport de dérive des plongements d'un run
      project       Projection 2D de plongements
      play          Jouer une partie au clavier
      config        Afficher la configuration effective

    \b
    Exemples:
      degen-lab gen -D easy -n 5 --seed 1
      degen-lab train --config lab.toml --out-dir results
      degen-lab drift results/runs/embedding_finetuned/seed_0 --pair mug cupboard
    """
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


def create_progress_bar() -> Progress:
    """Crée une barre de progression Rich."""
    return Progress(
        SpinnerColumn(),
        TextColumn("[bold blue]{task.description}"),
        BarColumn(bar_width=40),
        TaskProgressColumn(),
        TextColumn("[dim]{task.fields[status]}"),
        console=console,
        transient=True,
    )


def print_banner() -> None:
    """Affiche la bannière de l'application."""
    banner = Text()
    banner.append("Degen Lab", style="bold cyan")
    banner.append(f" v{__version__}", style="dim")
    console.print(Panel(banner, subtitle="Encodeurs de texte et robustesse en RL"))


def print_config(config: ExperimentConfig) -> None:
    """Affiche les paramètres principaux de l'expérience."""
    table = Table(title="Configuration", show_header=False, box=None)
    table.add_column("Paramètre", style="cyan")
    table.add_column("Valeur")

    table.add_row("Difficulté", config.difficulty.value)
    table.add_row(
        "Parties",
        f"{config.n_train_games} train / {config.n_eval_games_id} ID / "
        f"{config.n_eval_games_ood} OOD",
    )
    table.add_row("Épisodes", f"{config.episodes} (max {config.max_steps} pas)")
    table.add_row("Encodeurs", ", ".join(kind.value for kind in config.encoders))
    table.add_row("Graines", ", ".join(str(seed) for seed in config.run_seeds))
    table.add_row("Perturbations", ", ".join(mode.value for mode in config.perturb_modes))
    table.add_row("Résultats", str(config.out_dir))

    console.print(table)
    console.print()


def format_elapsed(elapsed: float) -> str:
    """Durée lisible."""
    if elapsed < 60:
        return f"{elapsed:.1f}s"
    mins = int(elapsed // 60)
    return f"{mins}m {elapsed % 60:.0f}s"


def print_result(result: ExperimentResult, title: str, elapsed: float = 0) -> None:
    """Affiche le tableau agrégé et les fichiers écrits."""
    console.print()
    console.print(summary_table(result.summary, title))
    console.print()
    for path in result.files:
        console.print(f"  [dim]→[/dim] {path}")
    if elapsed > 0:
        console.print(f"\n[cyan]⏱ Durée: {format_elapsed(elapsed)}[/cyan]")
    console.print()


def common_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Options partagées: --config, --seed, --out-dir, --verbose, --debug."""
    func = click.option("--debug", "-d", is_flag=True, help="Mode debug")(func)
    func = click.option("--verbose", "-v", is_flag=True, help="Mode verbeux")(func)
    func = click.option(
        "--out-dir",
        "-o",
        type=click.Path(path_type=Path),
        help="Répertoire des résultats (défaut: ./results)",
    )(func)
    func = click.option("--seed", type=int, default=None, help="Graine de base des runs")(func)
    func = click.option(
        "--config",
        "-c",
        "config_path",
        type=click.Path(path_type=Path),
        help="Fichier de configuration TOML",
    )(func)
    return func


def prepare(
    config_path: Optional[Path],
    seed: Optional[int],
    out_dir: Optional[Path],
    verbose: bool,
    debug: bool,
    **overrides: Any,
) -> ExperimentConfig:
    """Configure le logger et charge la configuration (code 1 si elle est invalide)."""
    setup_logger(verbose=verbose, debug=debug)
    try:
        config = load_config(
            config_path,
            seed=seed,
            out_dir=out_dir,
            verbose=verbose or None,
            debug=debug or None,
            **overrides,
        )
    except ValueError as e:
        console.print(f"[red]Erreur de configuration: {e}[/red]")
        sys.exit(1)
    if config.log_file:
        setup_logger(verbose=config.verbose, debug=config.debug, log_file=config.log_file)
    return config


def run_guarded(debug: bool, action: Callable[[], None]) -> None:
    """Exécute une commande avec la gestion d'erreurs commune."""
    try:
        action()
    except KeyboardInterrupt:
        console.print("\n[yellow]Interruption par l'utilisateur[/yellow]")
        sys.exit(130)
    except ValueError as e:
        console.print(f"\n[red]Erreur: {e}[/red]")
        if debug:
            console.print_exception()
        sys.exit(1)
    except Exception as e:
        console.print(f"\n[red]Erreur fatale: {e}[/red]")
        if debug:
            console.print_exception()
        sys.exit(1)


def run_with_progress(
    runner: ExperimentRunner, task: Callable[[Optional[Callable[[str], None]]], ExperimentResult]
) -> ExperimentResult:
    """Exécute une tâche du runner avec une barre de progression par run."""
    with create_progress_bar() as progress:
        bar = progress.add_task("Runs", total=len(runner.jobs()), status="")

        def advance(message: str) -> None:
            progress.update(bar, advance=1, status=message)

        return task(advance)


# ============================================================================
# COMMANDES
# ============================================================================


@cli.command("gen")
@click.option(
    "--difficulty",
    "-D",
    type=click.Choice([d.value for d in Difficulty]),
    default=Difficulty.EASY.value,
    help="Difficulté (défaut: easy)",
)
@click.option("--count", "-n", type=int, default=5, help="Nombre de parties (défaut: 5)")
@click.option(
    "--mode",
    "-m",
    type=click.Choice([m.value for m in VocabMode]),
    default=VocabMode.ID.value,
    help="Vocabulaire des objets: id ou ood",
)
@common_options
def gen_cmd(
    difficulty: str,
    count: int,
    mode: str,
    config_path: Optional[Path],
    seed: Optional[int],
    out_dir: Optional[Path],
    verbose: bool,
    debug: bool,
) -> None:
    """Génère des parties et les écrit en JSON (graines seed..seed+count-1).

    \b
    Exemples:
      degen-lab gen -D easy -n 5 --seed 1
      degen-lab gen -D hard -m ood -o games/
    """
    config = prepare(config_path, seed, out_dir, verbose, debug)

    def action() -> None:
        if count < 1:
            raise ValueError("--count doit être positif")
        target = config.out_dir / "games"
        paths = gen_games(
            Difficulty(difficulty),
            count,
            config.seed,
            VocabMode(mode),
            target,
            max_steps=config.max_steps,
            template_set_id=config.template_set_id,
        )
        for path in paths:
            console.print(f"[green]✓[/green] {path}")

    run_guarded(debug, action)


@cli.command("train")
@click.option(
    "--encoder",
    "-e",
    "encoders",
    multiple=True,
    type=click.Choice([kind.value for kind in EncoderKind]),
    help="Encodeur à entraîner (répétable; défaut: tous)",
)
@click.option("--episodes", type=int, default=None, help="Épisodes par run (défaut: 100)")
@click.option("--runs", "n_runs", type=int, default=None, help="Nombre de runs (défaut: 5)")
@click.option(
    "--difficulty",
    "-D",
    type=click.Choice([d.value for d in Difficulty]),
    default=None,
    help="Difficulté des parties (défaut: medium)",
)
@click.option("--threads", "-j", type=int, default=None, help="Runs en parallèle (défaut: 4)")
@common_options
def train_cmd(
    encoders: tuple[str, ...],
    episodes: Optional[int],
    n_runs: Optional[int],
    difficulty: Optional[str],
    threads: Optional[int],
    config_path: Optional[Path],
    seed: Optional[int],
    out_dir: Optional[Path],
    verbose: bool,
    debug: bool,
) -> None:
    """Entraîne chaque encodeur sur chaque graine puis évalue (train, ID, OOD, perturbations).

    \b
    Exemples:
      degen-lab train
      degen-lab train -e hash -e embedding_frozen --runs 3 -j 8
    """
    print_banner()
    config = prepare(
        config_path,
        seed,
        out_dir,
        verbose,
        debug,
        encoders=list(encoders) if encoders else None,
        episodes=episodes,
        n_runs=n_runs,
        difficulty=difficulty,
        max_workers=threads,
    )
    if verbose or debug:
        print_config(config)

    def action() -> None:
        runner = ExperimentRunner(config)
        console.print("[cyan]🚀 Démarrage de l'entraînement...[/cyan]\n")
        start_time = time.time()
        result = run_with_progress(runner, runner.run_experiment)
        print_result(result, "Scores normalisés", time.time() - start_time)

    run_guarded(debug, action)


@cli.command("eval")
@common_options
def eval_cmd(
    config_path: Optional[Path],
    seed: Optional[int],
    out_dir: Optional[Path],
    verbose: bool,
    debug: bool,
) -> None:
    """Réévalue les checkpoints d'une expérience sur les parties train, ID et OOD."""
    config = prepare(config_path, seed, out_dir, verbose, debug)

    def action() -> None:
        runner = ExperimentRunner(config)
        targets = eval_targets([PerturbMode.NONE])
        result = run_with_progress(
            runner, lambda callback: runner.run_evaluation(targets, "eval_checkpoints", callback)
        )
        print_result(result, "Évaluation des checkpoints")

    run_guarded(debug, action)


@cli.command("perturb-eval")
@click.option(
    "--mode",
    "-m",
    "modes",
    multiple=True,
    type=click.Choice([m.value for m in PerturbMode]),
    help="Perturbation évaluée (répétable; défaut: celles de la configuration)",
)
@click.option("--rate", type=float, default=None, help="Taux de substitution lexicale ]0, 1]")
@common_options
def perturb_eval_cmd(
    modes: tuple[str, ...],
    rate: Optional[float],
    config_path: Optional[Path],
    seed: Optional[int],
    out_dir: Optional[Path],
    verbose: bool,
    debug: bool,
) -> None:
    """Réévalue les checkpoints sur les parties d'entraînement perturbées."""
    config = prepare(
        config_path,
        seed,
        out_dir,
        verbose,
        debug,
        perturb_modes=list(modes) if modes else None,
        substitution_rate=rate,
    )

    def action() -> None:
        runner = ExperimentRunner(config)
        targets = [(GameSet.TRAIN, mode) for mode in config.perturb_modes]
        result = run_with_progress(
            runner, lambda callback: runner.run_evaluation(targets, "perturb_eval", callback)
        )
        print_result(result, "Robustesse aux perturbations")

    run_guarded(debug, action)


@cli.command("drift")
@click.argument(
    "run_path",
    required=False,
    type=click.Path(path_type=Path, exists=True, file_okay=False),
)
@click.option(
    "--encoder",
    "-e",
    type=click.Choice([kind.value for kind in EncoderKind if kind != EncoderKind.HASH]),
    default=EncoderKind.EMBEDDING_FINETUNED.value,
    help="Encodeur du run analysé sans RUN_PATH (défaut: embedding_finetuned)",
)
@click.option("--top-k", type=int, default=10, help="Jetons les plus dérivés listés")
@click.option(
    "--pair",
    "pairs",
    type=(str, str),
    multiple=True,
    help="Paire de jetons dont comparer la distance avant/après (répétable)",
)
@common_options
def drift_cmd(
    run_path: Optional[Path],
    encoder: str,
    top_k: int,
    pairs: tuple[tuple[str, str], ...],
    config_path: Optional[Path],
    seed: Optional[int],
    out_dir: Optional[Path],
    verbose: bool,
    debug: bool,
) -> None:
    """Rapport de dérive des plongements d'un run.

    Sans RUN_PATH, le run analysé est <out-dir>/runs/<encodeur>/seed_<seed>.

    \b
    Exemples:
      degen-lab drift results/runs/embedding_finetuned/seed_0 --pair mug cupboard
      degen-lab drift -o results --seed 2 -e embedding_frozen
    """
    config = prepare(config_path, seed, out_dir, verbose, debug)

    def action() -> None:
        directory = run_path or run_dir(config.out_dir, EncoderKind(encoder), config.seed)
        report, paths = run_drift(directory, top_k=top_k, pairs=list(pairs))

        table = Table(title="Dérive moyenne par groupe de jetons", show_header=True)
        table.add_column("Groupe", style="cyan")
        table.add_column("Jetons", justify="right")
        table.add_column("Dérive", justify="right")
        for name, mean in report.partition_means.items():
            table.add_row(name, str(report.partition_sizes[name]), f"{mean:.4f}")
        console.print(table)

        top = Table(title=f"Top {top_k} des jetons dérivés", show_header=True)
        top.add_column("Jeton", style="cyan")
        top.add_column("Dérive", justify="right")
        for token, distance in report.top:
            top.add_row(token, f"{distance:.4f}")
        console.print(top)

        for row in report.pairs.itertuples(index=False):
            arrow = "[green]↓[/green]" if row.after < row.before else "[yellow]↑[/yellow]"
            console.print(f"  {row.x} / {row.y}: {row.before:.4f} → {row.after:.4f} {arrow}")
        for path in paths:
            console.print(f"  [dim]→[/dim] {path}")

    run_guarded(debug, action)


@cli.command("project")
@click.option(
    "--snapshot",
    "-s",
    "snapshots",
    type=(str, click.Path(path_type=Path, exists=True, dir_okay=False)),
    multiple=True,
    help="Nom et fichier GloVe d'un instantané (répétable; défaut: début et fin du run)",
)
@click.option(
    "--encoder",
    "-e",
    type=click.Choice([kind.value for kind in EncoderKind if kind != EncoderKind.HASH]),
    default=EncoderKind.EMBEDDING_FINETUNED.value,
    help="Encodeur du run projeté sans --snapshot (défaut: embedding_finetuned)",
)
@click.option("--token", "-t", "tokens", multiple=True, help="Jeton à projeter (défaut: tous)")
@common_options
def project_cmd(
    snapshots: tuple[tuple[str, Path], ...],
    encoder: str,
    tokens: tuple[str, ...],
    config_path: Optional[Path],
    seed: Optional[int],
    out_dir: Optional[Path],
    verbose: bool,
    debug: bool,
) -> None:
    """Projection ACP 2D de plongements (projection.csv + vectors.tsv).

    Avec --snapshot, les fichiers sont écrits dans --out-dir. Sans --snapshot, les
    instantanés de début et de fin de <out-dir>/runs/<encodeur>/seed_<seed> sont
    projetés et les fichiers écrits dans ce run.

    \b
    Exemples:
      degen-lab project -s start runs/.../embedding_start.txt \\
                        -s end runs/.../embedding_end.txt -t mug -t cupboard -o proj
      degen-lab project -o results --seed 1 -t mug -t cup
    """
    config = prepare(config_path, seed, out_dir, verbose, debug)

    def action() -> None:
        if snapshots:
            target, chosen = config.out_dir, list(snapshots)
        else:
            target = run_dir(config.out_dir, EncoderKind(encoder), config.seed)
            chosen = run_snapshots(target)
        projection = run_project(chosen, target, list(tokens) or None)
        flag = " [yellow](dégénérée)[/yellow]" if projection.degenerate else ""
        console.print(f"[green]✓[/green] {len(projection.labels)} point(s) projeté(s){flag}")
        console.print(f"  [dim]→[/dim] {target / 'projection.csv'}")
        console.print(f"  [dim]→[/dim] {target / 'vectors.tsv'}")

    run_guarded(debug, action)


@cli.command("play")
@click.option(
    "--game",
    "-g",
    "game_path",
    type=click.Path(path_type=Path, exists=True, dir_okay=False),
    help="Partie JSON (sinon générée depuis --seed)",
)
@click.option(
    "--difficulty",
    "-D",
    type=click.Choice([d.value for d in Difficulty]),
    default=Difficulty.EASY.value,
    help="Difficulté de la partie générée",
)
@click.option(
    "--vocab",
    type=click.Choice([m.value for m in VocabMode]),
    default=VocabMode.ID.value,
    help="Vocabulaire de la partie générée",
)
@click.option(
    "--mode",
    "-m",
    type=click.Choice([m.value for m in PerturbMode]),
    default=PerturbMode.NONE.value,
    help="Perturbation appliquée aux textes",
)
@common_options
def play_cmd(
    game_path: Optional[Path],
    difficulty: str,
    vocab: str,
    mode: str,
    config_path: Optional[Path],
    seed: Optional[int],
    out_dir: Optional[Path],
    verbose: bool,
    debug: bool,
) -> None:
    """Joue une partie au clavier: entrez le numéro d'une action, « q » pour quitter.

    Une partie générée (graine --seed, pas maximum et templates de la configuration)
    est enregistrée dans <out-dir>/games pour être rejouée avec --game.
    """
    config = prepare(config_path, seed, out_dir, verbose, debug)

    def action() -> None:
        if game_path is not None:
            spec = load_game_spec(game_path)
        else:
            spec = generate_game(
                Difficulty(difficulty),
                config.seed,
                load_concept_pool(),
                vocab_mode=VocabMode(vocab),
                max_steps=config.max_steps,
                template_set_id=config.template_set_id,
            )
            path = config.out_dir / "games" / f"{spec.game_id}.json"
            save_game_spec(spec, path)
            logger.info(f"Partie enregistrée: {path}")
        perturb = PerturbMode(mode)
        lexicon = load_lexicon(config.lexicon_path) if perturb == PerturbMode.LEXICAL else None
        env = wrap_env(spec, perturb, lexicon=lexicon, seed=config.seed)
        console.print(f"[bold cyan]{spec.game_id}[/bold cyan] ({perturb.value})\n")
        outcome = play_session(env, lambda prompt: input(prompt), console.print)
        if outcome.quit:
            console.print("[yellow]Partie abandonnée[/yellow]")
        logger.debug(f"Session terminée: {outcome}")

    run_guarded(debug, action)


@cli.command("config")
@click.option("--config", "-c", "config_path", type=click.Path(path_type=Path))
@click.option("--debug", "-d", is_flag=True, help="Afficher aussi les variables DEGEN_*")
def config_cmd(config_path: Optional[Path], debug: bool) -> None:
    """Affiche la configuration effective et les fichiers recherchés."""
    print_banner()

    console.print("\n[bold cyan]📁 Fichiers de configuration[/bold cyan]\n")
    config_file = config_path or find_config_file()
    table = Table(show_header=True, box=None)
    table.add_column("Type", style="cyan")
    table.add_column("Fichier")
    table.add_column("État")
    if config_file and config_file.exists():
        table.add_row("TOML", str(config_file), "[green]✓ Trouvé[/green]")
    else:
        table.add_row("TOML", str(config_file or "-"), "[dim]Non trouvé[/dim]")
    console.print(table)

    if debug:
        console.print("\n[bold yellow]🔍 Debug: variables d'environnement[/bold yellow]\n")
        env_vars = debug_config(config_path)["env_vars"]
        if env_vars:
            for key, value in env_vars.items():
                console.print(f"  [cyan]{key}[/cyan] = {value}")
        else:
            console.print("  [dim]Aucune variable DEGEN_*[/dim]")

    try:
        config = load_config(config_path)

        console.print("\n[bold cyan]⚙️ Configuration active[/bold cyan]\n")
        table = Table(show_header=False, box=None)
        table.add_column("Paramètre", style="cyan", width=25)
        table.add_column("Valeur")
        for key, value in config.model_dump(mode="json").items():
            if key == "agent":
                for agent_key, agent_value in value.items():
                    table.add_row(f"agent.{agent_key}", str(agent_value))
            else:
                table.add_row(key, str(value))
        console.print(table)

        console.print("\n[bold cyan]📍 Emplacements recherchés[/bold cyan]\n")
        console.print("[dim]Fichiers TOML (par ordre de priorité) :[/dim]")
        for loc in CONFIG_LOCATIONS:
            exists = "[green]✓[/green]" if loc.exists() else "[dim]✗[/dim]"
            console.print(f"  {exists} {loc}")

    except ValueError as e:
        console.print(f"\n[red]Erreur de configuration: {e}[/red]")
        sys.exit(1)


def main() -> None:
    """Point d'entrée principal."""
    cli()


if __name__ == "__main__":
    main()
