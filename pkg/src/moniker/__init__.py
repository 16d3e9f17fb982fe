"""Moniker: name-based bias auditing for language models.

Curates racially representative gender-surname pairs, asks a model to
predict the investment in a Trust Game between named players, and tests
the predictions for gender and race effects.
"""

__version__ = "0.1.0"
