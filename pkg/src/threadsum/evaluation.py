"""Scoring generated summaries against the thread they summarize.

The headline metric is XENT(Rouge): the cross-entropy between the thread's
normalized likes distribution and the distribution of per-comment ROUGE
recall scores of the summary.  Lower is better; a summary whose lexical
overlap concentrates on the most-liked comments scores close to the
entropy of the likes distribution, which is the Gibbs lower bound.

Also here: likes-weighted average recall, title ROUGE, per-thread
characterization features with their quartile report, and the
centroid-similarity extractive baseline.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from threadsum._kernels import ngram_overlap
from threadsum.corpus import CleanThread
from threadsum.tokenizer import Vocab, encode

SMOOTH_EPS = 1e-3  # Laplace mass added to both distributions before normalizing

_NON_WORD = re.compile(r"[^\w\s]")


class MetricError(ValueError):
    """Raised when a metric is undefined for the given inputs."""


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float
    n: int


@dataclass(frozen=True)
class CharacterizationFeatures:
    thread_length: int
    salient_comment_length: int
    n_comments: int
    ld_thread: float
    ld_salient: float
    likes_std: float


@dataclass
class EvalReport:
    thread_id: str
    per_comment_rouge: list[float]
    likes_dist: list[float]
    rouge_dist: list[float]
    xent: float
    recall_w: float  # nan when the thread collected no likes at all
    title_rouge: float
    features: CharacterizationFeatures


def rouge_tokens(text: str) -> list[str]:
    """ROUGE word tokenization: lowercase, punctuation stripped, whitespace split."""
    return _NON_WORD.sub(" ", text.lower()).split()


def rouge_n(candidate: str, reference: str, n: int = 1) -> RougeScore:
    """Clipped n-gram overlap scores; an empty side zeroes the affected score."""
    if n < 1:
        raise MetricError("n-gram order must be >= 1")
    overlap, n_cand, n_ref = ngram_overlap(rouge_tokens(candidate), rouge_tokens(reference), n)
    recall = overlap / n_ref if n_ref else 0.0
    precision = overlap / n_cand if n_cand else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RougeScore(recall=recall, precision=precision, f1=f1, n=n)


def cross_entropy(p: np.ndarray, q: np.ndarray) -> float:
    """H(p, q) = -sum p ln q in nats; q must be strictly positive."""
    return float(-(np.asarray(p) * np.log(np.asarray(q))).sum())


def _normalize(raw: np.ndarray) -> np.ndarray:
    smoothed = raw + SMOOTH_EPS
    return smoothed / smoothed.sum()


def xent_rouge(summary: str, thread: CleanThread, n: int = 1):
    """Cross-entropy of the smoothed likes distribution against the smoothed
    per-comment ROUGE-recall distribution.  Returns (xent, likes_dist,
    rouge_dist)."""
    if not thread.comments:
        raise MetricError(f"thread {thread.id!r} has no comments")
    scores = np.array([rouge_n(summary, c.text, n).recall for c in thread.comments])
    likes_dist = _normalize(np.asarray(thread.likes, dtype=np.float64))
    rouge_dist = _normalize(scores)
    return cross_entropy(likes_dist, rouge_dist), likes_dist, rouge_dist


def weighted_recall(summary: str, thread: CleanThread, n: int = 1) -> float:
    """Likes-weighted average of per-comment ROUGE recall."""
    likes = np.asarray(thread.likes, dtype=np.float64)
    total = likes.sum()
    if total <= 0:
        raise MetricError("Recall_w undefined for zero total likes")
    recalls = np.array([rouge_n(summary, c.text, n).recall for c in thread.comments])
    return float((recalls * likes).sum() / total)


def title_rouge(summary: str, title: str, n: int = 1) -> float:
    """Recall of the title's n-grams inside the generated summary."""
    return rouge_n(summary, title, n).recall


def _words(text: str) -> list[str]:
    return text.split()


def _lexical_diversity(words: list[str]) -> float:
    if not words:
        return 0.0
    return len({w.lower() for w in words}) / len(words)


def characterize(thread: CleanThread, salient_indices: list[int]) -> CharacterizationFeatures:
    """Per-thread features: lengths, comment count, lexical diversity of the
    whole thread and of the salient comments, and the spread of the
    max-normalized likes."""
    for i in salient_indices:
        if not 0 <= i < len(thread.comments):
            raise MetricError(f"salient comment index {i} out of range")
    thread_words = _words(thread.title)
    for comment in thread.comments:
        thread_words.extend(_words(comment.text))
    salient_words: list[str] = []
    for i in salient_indices:
        salient_words.extend(_words(thread.comments[i].text))
    likes = np.asarray(thread.likes, dtype=np.float64)
    max_likes = likes.max() if likes.size else 0.0
    likes_std = float((likes / max_likes).std()) if max_likes > 0 else 0.0
    return CharacterizationFeatures(
        thread_length=len(thread_words),
        salient_comment_length=len(salient_words),
        n_comments=len(thread.comments),
        ld_thread=_lexical_diversity(thread_words),
        ld_salient=_lexical_diversity(salient_words),
        likes_std=likes_std,
    )


def quartile_report(reports: list[EvalReport]) -> list[dict]:
    """Average the characterization features within XENT quartiles.

    Reports are sorted by ascending xent (ties broken by thread id), Q1
    holding the best-scored quartile and Q4 the worst.
    """
    if len(reports) < 4:
        raise MetricError(f"need at least 4 reports for quartiles, got {len(reports)}")
    ordered = sorted(reports, key=lambda r: (r.xent, r.thread_id))
    rows = []
    feature_names = (
        "thread_length",
        "salient_comment_length",
        "n_comments",
        "ld_thread",
        "ld_salient",
        "likes_std",
    )
    for q, chunk in enumerate(np.array_split(np.array(ordered, dtype=object), 4), start=1):
        row = {"quartile": f"Q{q}", "n_threads": len(chunk)}
        row["xent"] = float(np.mean([r.xent for r in chunk]))
        for name in feature_names:
            row[name] = float(np.mean([getattr(r.features, name) for r in chunk]))
        rows.append(row)
    return rows


def centroid_baseline(thread: CleanThread, vocab: Vocab, embed: np.ndarray, k: int = 1) -> str:
    """Extractive baseline: the k comments whose mean token embedding lies
    closest (cosine) to the centroid of all comment embeddings, concatenated
    in thread order."""
    if k < 1:
        raise MetricError("k must be >= 1")
    if not thread.comments:
        raise MetricError(f"thread {thread.id!r} has no comments")
    vectors = []
    for comment in thread.comments:
        ids = encode(vocab, [comment.text], max_len=512).ids
        vectors.append(embed[ids].mean(axis=0) if ids else np.zeros(embed.shape[1]))
    vectors = np.asarray(vectors, dtype=np.float64)
    centroid = vectors.mean(axis=0)
    norms = np.linalg.norm(vectors, axis=1) * np.linalg.norm(centroid)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosine = np.where(norms > 0, vectors @ centroid / norms, 0.0)
    ranked = sorted(range(len(cosine)), key=lambda i: (-cosine[i], i))[:k]
    return " ".join(thread.comments[i].text for i in sorted(ranked))


def _salient_indices(thread: CleanThread, n_comments: int) -> list[int]:
    """Top-liked comments (ties broken by thread order) stand in for the
    generation target when characterizing evaluation threads."""
    order = sorted(range(len(thread.comments)), key=lambda i: (-thread.comments[i].likes, i))
    return sorted(order[: min(n_comments, len(order))])


def evaluate_thread(summary_comments: str, full_summary: str, thread: CleanThread, n: int = 1,
                    n_salient: int = 1) -> EvalReport:
    """Score one generated summary against its thread."""
    xent, likes_dist, rouge_dist = xent_rouge(summary_comments, thread, n)
    try:
        recall_w = weighted_recall(summary_comments, thread, n)
    except MetricError:
        recall_w = float("nan")
    return EvalReport(
        thread_id=thread.id,
        per_comment_rouge=[rouge_n(summary_comments, c.text, n).recall for c in thread.comments],
        likes_dist=[float(x) for x in likes_dist],
        rouge_dist=[float(x) for x in rouge_dist],
        xent=xent,
        recall_w=recall_w,
        title_rouge=title_rouge(full_summary, thread.title, n),
        features=characterize(thread, _salient_indices(thread, n_salient)),
    )


def evaluate_fold(state, fold: list[CleanThread], decode_config, vocab: Vocab, n: int = 1):
    """Summarize every thread in the fold (likes withheld) and score it.

    Returns (reports, aggregates, n_skipped); threads that fail to encode
    are skipped and counted.  Aggregate means ignore nan recall_w values.
    """
    from threadsum.decoding import summarize

    if not fold:
        raise MetricError("cannot evaluate an empty fold")
    reports = []
    skipped = 0
    for thread in fold:
        try:
            result = summarize(state, vocab, thread, decode_config, provide_likes=False)
        except Exception:
            skipped += 1
            continue
        comment_text = " ".join(result["comment_parts"]) or result["raw"]
        reports.append(
            evaluate_thread(
                comment_text, result["raw"], thread, n=n, n_salient=state.variant.n_comments
            )
        )
    aggregates = {
        "xent": float(np.mean([r.xent for r in reports])) if reports else float("nan"),
        "recall_w": _nanmean([r.recall_w for r in reports]),
        "title_rouge": float(np.mean([r.title_rouge for r in reports])) if reports else float("nan"),
    }
    return reports, aggregates, skipped


def _nanmean(values) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return float(np.mean(finite)) if finite else float("nan")
