"""Toolkit for building a factual-change QA dataset from paired corpus
snapshots and for evaluating retrieval robustness against outdated
information."""

__version__ = "0.1.0"
