"""Few-photon exciton and biexciton dynamics in finite chains and square wells."""

__version__ = "0.1.0"
