"""aechain: chaining adversarial-example generators against static binary classifiers."""

__version__ = "0.1.0"
