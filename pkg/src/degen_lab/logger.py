"""Journalisation du laboratoire: console rich, fichier optionnel, étiquette de run."""

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

# Étiquette du run courant (« encodeur/graine »), propre à chaque thread de travail
_RUN_TAG: ContextVar[str] = ContextVar("run_tag", default="-")

FILE_FORMAT = "%(asctime)s - %(threadName)s - [%(run)s] %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class RunTagFilter(logging.Filter):
    """Ajoute l'attribut `run` à chaque enregistrement."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = _RUN_TAG.get()
        return True


@contextmanager
def run_tag(tag: str) -> Iterator[None]:
    """Étiquette les logs émis dans le bloc (et dans le thread courant) avec `tag`."""
    token = _RUN_TAG.set(tag)
    try:
        yield
    finally:
        _RUN_TAG.reset(token)


def setup_logger(
    name: str = "degen_lab",
    verbose: bool = False,
    debug: bool = False,
    log_file: Optional[str] = None,
) -> logging.Logger:
    """Configure et retourne le logger du laboratoire.

    La console (stderr) affiche WARNING, INFO en mode verbeux, DEBUG en mode debug.
    Le fichier, s'il est donné, reçoit tout.

    Args:
        name: Nom du logger
        verbose: Active le mode verbeux (INFO)
        debug: Active le mode debug (DEBUG)
        log_file: Chemin optionnel vers un fichier de log

    Returns:
        Logger configuré
    """
    logger = logging.getLogger(name)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if debug:
        level = logging.DEBUG
    elif verbose:
        level = logging.INFO
    else:
        level = logging.WARNING

    logger.propagate = False
    logger.filters.clear()
    logger.addFilter(RunTagFilter())

    console_handler = RichHandler(
        console=Console(stderr=True),
        level=level,
        markup=False,
        show_path=debug,
        show_time=debug,
        rich_tracebacks=debug,
    )
    console_handler.setFormatter(logging.Formatter("[%(run)s] %(message)s"))
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(file_handler)

    logger.setLevel(logging.DEBUG if log_file else level)
    return logger


# Logger global par défaut
logger = setup_logger()
