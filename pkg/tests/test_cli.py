"""Tests pour l'interface en ligne de commande."""

from pathlib import Path

import pytest
from click.testing import CliRunner

from degen_lab.cli import cli
from degen_lab.engine import GameEnv, load_game_spec, oracle_solve, save_game_spec
from degen_lab.models import GameSpec

TINY_TOML = """
difficulty = "easy"
n_train_games = 1
n_eval_games_id = 1
n_eval_games_ood = 1
episodes = 2
max_steps = 5
n_runs = 1
encoders = ["hash", "embedding_finetuned"]
perturb_modes = ["none", "lexical"]
embedding_dim = 6
hidden_size = 4

[agent]
batch_size = 2
warmup_transitions = 2
"""


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Évite de lire un degen-lab.toml ou des variables DEGEN_* de la machine."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr("degen_lab.config.CONFIG_LOCATIONS", [tmp_path / "degen-lab.toml"])
    for key in ("DEGEN_EPISODES", "DEGEN_DIFFICULTY", "DEGEN_OUT_DIR", "DEGEN_SEED"):
        monkeypatch.delenv(key, raising=False)


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def test_help_lists_commands(runner: CliRunner) -> None:
    """Test l'aide du groupe principal."""
    result = runner.invoke(cli, [])

    assert result.exit_code == 0
    for command in ("gen", "train", "eval", "perturb-eval", "drift", "project", "play"):
        assert command in result.output


def test_gen_writes_games(runner: CliRunner, tmp_path: Path) -> None:
    """Test la génération de parties."""
    result = runner.invoke(cli, ["gen", "-D", "medium", "-n", "2", "--seed", "4", "-o", "out"])

    assert result.exit_code == 0, result.output
    games = tmp_path / "out" / "games"
    assert sorted(p.name for p in games.iterdir()) == ["medium-id-4.json", "medium-id-5.json"]


def test_gen_rejects_bad_count(runner: CliRunner) -> None:
    """Test le code de sortie sur un argument invalide."""
    result = runner.invoke(cli, ["gen", "-n", "0"])

    assert result.exit_code == 1
    assert "Erreur" in result.output


def test_invalid_config_file(runner: CliRunner, tmp_path: Path) -> None:
    """Test le code 1 sur une configuration invalide."""
    (tmp_path / "bad.toml").write_text("episodes = 0\n")
    result = runner.invoke(cli, ["gen", "-c", "bad.toml"])

    assert result.exit_code == 1
    assert "Erreur de configuration" in result.output


def test_config_command(runner: CliRunner, tmp_path: Path) -> None:
    """Test l'affichage de la configuration effective."""
    (tmp_path / "lab.toml").write_text(TINY_TOML)
    result = runner.invoke(cli, ["config", "-c", "lab.toml", "--debug"])

    assert result.exit_code == 0, result.output
    assert "Configuration active" in result.output
    assert "agent.batch_size" in result.output


def test_play_oracle_session(runner: CliRunner, tmp_path: Path, scripted_spec: GameSpec) -> None:
    """Test une partie jouée au clavier jusqu'à la victoire."""
    path = tmp_path / "game.json"
    save_game_spec(scripted_spec, path)
    env = GameEnv(scripted_spec)
    obs = env.reset()
    answers = []
    for action in oracle_solve(scripted_spec) or []:
        answers.append(str(obs.admissible_actions.index(action) + 1))
        obs = env.step(action).observation

    result = runner.invoke(cli, ["play", "-g", str(path)], input="\n".join(answers) + "\n")

    assert result.exit_code == 0, result.output
    assert "Fin de partie: 1/1" in result.output


def test_play_quit(runner: CliRunner, tmp_path: Path) -> None:
    """Test l'abandon d'une partie générée, enregistrée pour être rejouée."""
    result = runner.invoke(cli, ["play", "--seed", "2", "-m", "paraphrase"], input="x\nq\n")

    assert result.exit_code == 0, result.output
    assert "Choix invalide" in result.output
    assert "Partie abandonnée" in result.output
    assert (tmp_path / "results" / "games" / "easy-id-2.json").exists()


def test_train_then_analyse(runner: CliRunner, tmp_path: Path) -> None:
    """Test la chaîne complète: entraînement, réévaluations, dérive et projection."""
    (tmp_path / "lab.toml").write_text(TINY_TOML)
    out = tmp_path / "out"

    result = runner.invoke(cli, ["train", "-c", "lab.toml", "-o", "out", "-j", "1"])
    assert result.exit_code == 0, result.output
    assert (out / "summary.csv").exists()
    assert (out / "curves.csv").exists()

    result = runner.invoke(cli, ["eval", "-c", "lab.toml", "-o", "out"])
    assert result.exit_code == 0, result.output
    assert (out / "eval_checkpoints.csv").exists()

    result = runner.invoke(cli, ["perturb-eval", "-c", "lab.toml", "-o", "out", "-m", "lexical"])
    assert result.exit_code == 0, result.output
    assert (out / "perturb_eval_summary.csv").exists()

    run = out / "runs" / "embedding_finetuned" / "seed_0"
    result = runner.invoke(cli, ["drift", str(run), "--top-k", "3", "--pair", "mug", "cup"])
    assert result.exit_code == 0, result.output
    assert (run / "drift_tokens.csv").exists()

    result = runner.invoke(
        cli,
        [
            "project",
            "-s", "start", str(run / "embedding_start.txt"),
            "-s", "end", str(run / "embedding_end.txt"),
            "-t", "mug", "-t", "cup", "-t", "socks",
            "-o", "proj",
        ],
    )  # fmt: skip
    assert result.exit_code == 0, result.output
    assert (tmp_path / "proj" / "projection.csv").exists()

    result = runner.invoke(cli, ["drift", "-o", "out", "--seed", "0", "-e", "embedding_finetuned"])
    assert result.exit_code == 0, result.output
    assert "Dérive moyenne" in result.output

    result = runner.invoke(cli, ["project", "-c", "lab.toml", "-o", "out", "-t", "mug", "-t", "cup"])
    assert result.exit_code == 0, result.output
    assert (run / "projection.csv").exists()
    assert (run / "vectors.tsv").exists()


def test_play_with_config(runner: CliRunner, tmp_path: Path) -> None:
    """Test une partie générée depuis la configuration et la graine de la ligne de commande."""
    (tmp_path / "lab.toml").write_text(TINY_TOML)
    result = runner.invoke(
        cli, ["play", "-c", "lab.toml", "--seed", "3", "-o", "mine", "-D", "easy"], input="q\n"
    )

    assert result.exit_code == 0, result.output
    assert "easy-id-3" in result.output
    saved = load_game_spec(tmp_path / "mine" / "games" / "easy-id-3.json")
    assert saved.max_steps == 5


def test_drift_on_hash_run_fails(runner: CliRunner, tmp_path: Path) -> None:
    """Test l'erreur de dérive sur un run sans plongements."""
    (tmp_path / "empty").mkdir()
    result = runner.invoke(cli, ["drift", "empty"])

    assert result.exit_code == 1
    assert "absent" in result.output


def test_eval_without_training(runner: CliRunner, tmp_path: Path) -> None:
    """Test l'erreur d'une réévaluation sans checkpoint."""
    (tmp_path / "lab.toml").write_text(TINY_TOML)
    result = runner.invoke(cli, ["eval", "-c", "lab.toml", "-o", "nothing"])

    assert result.exit_code == 1
