"""Behavioral constituency probing via one-shot word-deletion tasks.

The package administers a one-shot deletion task (one demonstration, one
test sentence) to LLM endpoints, simulated rule-following agents, or human
participants, classifies the deleted word strings against reference
constituency trees, and reconstructs latent trees from pooled deletion
behavior.
"""

__version__ = "0.1.0"
