"""Context-mapped zero-shot document classification.

Train on a weak label, map documents through a semantic space built from
TF-IDF feature words and their embedding neighbours, and score the target
label with a small feed-forward network.
"""

__version__ = "0.1.0"
