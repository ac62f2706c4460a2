"""Lexicon-enriched aspect-based sentiment classification on a numpy BERT-style encoder."""

__version__ = "0.1.0"
