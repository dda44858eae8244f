"""Degen Lab - RL textuel, encodeurs interchangeables et dégénérescence sémantique."""

__version__ = "1.0.0"
