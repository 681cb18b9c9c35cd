"""Python bindings for the coldllm cold-start recommender core."""

import json

from ._core import (
    OracleParseError,
    ValidationError,
    mock_embed,
    ndcg_at_k,
    parse_yes_no,
    recall_at_k,
    render_prompt,
)
from . import _core

__all__ = [
    "OracleParseError",
    "ValidationError",
    "config_fingerprint",
    "default_config",
    "mock_embed",
    "ndcg_at_k",
    "normalize_config",
    "parse_yes_no",
    "recall_at_k",
    "render_prompt",
    "run_planted",
]


def default_config():
    """The default configuration as a dict."""
    return json.loads(_core.default_config_json())


def normalize_config(config):
    """Fill defaults into a partial config dict and validate it."""
    return json.loads(_core.normalize_config_json(json.dumps(config)))


def config_fingerprint(config):
    return _core.config_fingerprint(json.dumps(config))


def run_planted(config, variant="full"):
    """Train and evaluate one ablation variant on the planted synthetic world.

    Returns the evaluation report with an ``adoption`` entry when the variant refines.
    """
    return json.loads(_core.run_planted_json(json.dumps(config), variant))
