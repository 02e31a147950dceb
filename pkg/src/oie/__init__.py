"""Goal-conditioned object importance estimation on a synthetic driving benchmark."""

__version__ = "0.1.0"
