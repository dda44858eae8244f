"""Tests pour Degen Lab."""
