"""Simulated viewer comments for videos.

Thin wrappers over the native core. Functions that return structured results
decode the core's JSON into plain dicts and lists.
"""

from __future__ import annotations

import json
import os
from collections.abc import Iterable, Mapping, Sequence

from . import _commentsim as _core

__version__ = _core.__version__

Error = _core.Error
Error.kind = property(lambda self: self.args[0] if self.args else "internal")

tokenize = _core.tokenize
distinct = _core.distinct
average_length = _core.average_length
sentence_bleu = _core.sentence_bleu
self_bleu = _core.self_bleu
rouge_n_precision = _core.rouge_n_precision
rouge_l_precision = _core.rouge_l_precision
embedding_group_score = _core.embedding_group_score
wilcoxon = _core.wilcoxon
cosine_similarity = _core.cosine_similarity
plan_batch = _core.plan_batch
cli = _core.cli


def _path(p: str | os.PathLike | None) -> str | None:
    return None if p is None else os.fspath(p)


def run_pipeline(video, title: str, description: str = "", author: str = "", **options) -> dict:
    """Runs every stage on one video and returns the run manifest."""
    for key in ("thumbnail", "config", "work_dir", "personas"):
        if key in options:
            options[key] = _path(options[key])
    return json.loads(_core.run_pipeline(_path(video), title, description, author, **options))


def generate(video_id: str, **options) -> list[dict]:
    """Generates (or reloads) one comment batch for an already processed video."""
    for key in ("config", "work_dir", "personas"):
        if key in options:
            options[key] = _path(options[key])
    return json.loads(_core.generate(video_id, **options))


def rank_personas(keywords: Sequence[str], k: int = 30, **options) -> list[dict]:
    for key in ("config", "work_dir", "personas"):
        if key in options:
            options[key] = _path(options[key])
    return json.loads(_core.rank_personas(list(keywords), k, **options))


def evaluate(corpora: Mapping[str, Iterable[str]], summary: str = "", **options) -> dict:
    """Full metric battery; corpora keep their mapping order as report columns."""
    if "config" in options:
        options["config"] = _path(options["config"])
    pairs = [(label, list(comments)) for label, comments in corpora.items()]
    return json.loads(_core.evaluate(pairs, summary, **options))


__all__ = [
    "Error",
    "average_length",
    "cli",
    "cosine_similarity",
    "distinct",
    "embedding_group_score",
    "evaluate",
    "generate",
    "plan_batch",
    "rank_personas",
    "rouge_l_precision",
    "rouge_n_precision",
    "run_pipeline",
    "self_bleu",
    "sentence_bleu",
    "tokenize",
    "wilcoxon",
]
