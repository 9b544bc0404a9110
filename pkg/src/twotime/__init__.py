"""Two-time boundary-condition quantum mechanics: two-state vectors, ABL
probabilities, weak values, sampled final boundary conditions and the
decoherence experiments built on them."""

__version__ = "0.1.0"
