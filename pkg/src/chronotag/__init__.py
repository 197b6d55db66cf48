"""chronotag: character-level NER on historical corpora, across time and
annotation styles, with statistically tested transfer comparisons."""

__version__ = "0.1.0"
