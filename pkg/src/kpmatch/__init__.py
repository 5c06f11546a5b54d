"""Argument-to-keypoint matching toolkit.

Subpackages cover corpus loading and splitting, prompt templates, model
runtimes (a deterministic stub and an optional transformers backend),
matchers for the three experiment families, generation of intermediary
texts, triple classification, evaluation, and a command line front end.
"""

from __future__ import annotations

__version__ = "0.1.0"
