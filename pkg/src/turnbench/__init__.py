"""Orchestration and benchmarking hub for multimodal conversational pipelines."""

__version__ = "0.1.0"
