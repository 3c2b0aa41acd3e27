"""foresta: memory-safety analysis of pointer programs via forest automata."""

__version__ = "0.1.0"
