"""Deterministic synthetic news-thread corpora.

Threads mimic a Spanish news comment box: the title draws from one topic's
word pool, salient comments reuse topical words (and collect likes roughly
proportional to how topical they are), noise comments draw from a shared
off-topic pool and collect almost none.  Because the like counts correlate
with lexical overlap, these corpora let desk-scale experiments measure
whether like-driven attention helps the model find salient comments.

Run ``python -m threadsum.synth <out_dir>`` to regenerate the bundled data
files.
"""

from __future__ import annotations

import json
import sys

import numpy as np

TOPICS = (
    ("gobierno", ("gobierno", "ministro", "reforma", "congreso", "ley", "decreto", "votación", "oposición")),
    ("economía", ("economía", "inflación", "precios", "mercado", "empleo", "salario", "impuestos", "banco")),
    ("fútbol", ("fútbol", "partido", "gol", "equipo", "torneo", "jugador", "arquero", "hinchada")),
    ("clima", ("lluvia", "temporal", "viento", "inundación", "alerta", "frío", "nieve", "sequía")),
    ("salud", ("hospital", "vacuna", "salud", "médicos", "pacientes", "urgencia", "clínica", "tratamiento")),
    ("educación", ("escuela", "profesores", "alumnos", "clases", "universidad", "beca", "examen", "aula")),
    ("transporte", ("metro", "buses", "tráfico", "carretera", "pasajeros", "tarifa", "estación", "tren")),
    ("tecnología", ("internet", "datos", "red", "aplicación", "teléfono", "banda", "señal", "plataforma")),
    ("cultura", ("museo", "teatro", "festival", "música", "libro", "artista", "concierto", "pintura")),
    ("seguridad", ("policía", "robo", "delito", "barrio", "denuncia", "patrulla", "cámaras", "justicia")),
    ("energía", ("energía", "luz", "tarifas", "corte", "eléctrica", "solar", "planta", "consumo")),
    ("vivienda", ("vivienda", "arriendo", "casas", "subsidio", "proyecto", "barrios", "construcción", "terreno")),
)

NOISE_WORDS = (
    "siempre", "igual", "nadie", "todos", "nunca", "obvio", "claro", "puro",
    "show", "circo", "cuento", "mismo", "payasada", "chiste", "vergüenza", "basta",
)

FUNCTION_WORDS = (
    "el", "la", "los", "de", "en", "y", "que", "un", "una", "se", "por", "con", "más", "no", "es",
)


def _sentence(rng, content_pool, n_content: int, n_function: int) -> str:
    words = list(rng.choice(content_pool, size=n_content, replace=True))
    words += list(rng.choice(FUNCTION_WORDS, size=n_function, replace=True))
    rng.shuffle(words)
    return " ".join(words)


def _salient_comment(rng, title_words, topic_words) -> tuple[str, int]:
    """A topical comment; likes grow with its overlap of the title's words."""
    n_title = int(rng.integers(2, 4))
    n_topic = int(rng.integers(2, 4))
    words = list(rng.choice(title_words, size=min(n_title, len(title_words)), replace=False))
    words += list(rng.choice(topic_words, size=n_topic, replace=True))
    words += list(rng.choice(FUNCTION_WORDS, size=int(rng.integers(2, 4)), replace=True))
    rng.shuffle(words)
    overlap = len(set(words) & set(title_words)) / max(len(set(title_words)), 1)
    likes = int(15 + 60 * overlap + rng.integers(0, 10))
    return " ".join(words), likes


def _graded_comment(rng, title_content, topic_words, k: int) -> tuple[str, int]:
    """On-topic comment whose salience grade k (2..6) sets both how much
    topical content it carries and how many likes it collected, mirroring
    the way longer, richer comments attract votes."""
    rest = [w for w in topic_words if w not in title_content]
    pool = topic_words if k > len(rest) else rest
    words = list(rng.choice(pool, size=k, replace=False))
    words += list(rng.choice(FUNCTION_WORDS, size=3, replace=True))
    rng.shuffle(words)
    likes = int(round((k / 6) ** 2 * 100)) + int(rng.integers(0, 6))
    return " ".join(words), likes


def _noise_comment(rng) -> tuple[str, int]:
    text = _sentence(rng, NOISE_WORDS, int(rng.integers(4, 6)), int(rng.integers(2, 4)))
    return text, int(rng.integers(0, 3))


def make_corpus(
    n_threads: int,
    seed: int,
    n_salient: tuple[int, int] = (2, 4),
    n_noise: tuple[int, int] = (2, 5),
    id_prefix: str = "syn",
    style: str = "mixed",
) -> list[dict]:
    """Raw-schema thread dicts, deterministic given the seed.

    style "mixed": salient comments repeat the title's words and noise
    comments come from a shared off-topic pool.  style "graded": every
    comment is on topic but salience is graded, with likes growing with a
    comment's topical richness, so like counts track an observable but soft
    content signal.
    """
    rng = np.random.default_rng(seed)
    threads = []
    for t in range(n_threads):
        topic_index = int(rng.integers(0, len(TOPICS)))
        _, topic_words = TOPICS[topic_index]
        title_content = list(rng.choice(topic_words, size=3, replace=False))
        title_fn = list(rng.choice(FUNCTION_WORDS, size=2, replace=True))
        title = " ".join(title_content + title_fn)
        title_words = title.split()

        comments = []
        if style == "graded":
            grades = [2, 2, 3, 4, 5, 6]
            for k in rng.permutation(grades):
                text, likes = _graded_comment(rng, title_content, topic_words, int(k))
                comments.append({"text": text, "likes": likes})
        else:
            for _ in range(int(rng.integers(n_salient[0], n_salient[1] + 1))):
                text, likes = _salient_comment(rng, title_words, topic_words)
                comments.append({"text": text, "likes": likes})
            for _ in range(int(rng.integers(n_noise[0], n_noise[1] + 1))):
                text, likes = _noise_comment(rng)
                comments.append({"text": text, "likes": likes})
            order = rng.permutation(len(comments))
            comments = [comments[i] for i in order]
        threads.append({"id": f"{id_prefix}-{t:04d}", "title": title, "comments": comments})
    return threads


def toy_corpus() -> list[dict]:
    """Five tiny threads for the memorization check: one liked comment each."""
    rng = np.random.default_rng(7)
    threads = []
    for t in range(5):
        _, topic_words = TOPICS[t]
        title = " ".join(rng.choice(topic_words, size=3, replace=False)) + " hoy"
        salient = " ".join(
            list(rng.choice(topic_words, size=4, replace=False))
            + [str(rng.choice(FUNCTION_WORDS))]
        )
        noise = " ".join(rng.choice(NOISE_WORDS, size=5, replace=False))
        threads.append(
            {
                "id": f"toy-{t}",
                "title": title,
                "comments": [
                    {"text": salient, "likes": int(rng.integers(10, 50))},
                    {"text": noise, "likes": 0},
                ],
            }
        )
    return threads


def smoke_corpus() -> list[dict]:
    """Twenty mixed threads for pipeline smoke tests."""
    return make_corpus(20, seed=21, id_prefix="smoke")


def directional_corpus() -> list[dict]:
    """Two hundred threads whose salient comments correlate with likes."""
    return make_corpus(200, seed=95, id_prefix="dir", style="graded")


def write_jsonl(threads: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for thread in threads:
            fh.write(json.dumps(thread, ensure_ascii=False) + "\n")


def main(out_dir: str) -> None:
    import os

    os.makedirs(out_dir, exist_ok=True)
    write_jsonl(toy_corpus(), os.path.join(out_dir, "toy_corpus.jsonl"))
    write_jsonl(smoke_corpus(), os.path.join(out_dir, "smoke_corpus.jsonl"))
    print(f"wrote toy_corpus.jsonl and smoke_corpus.jsonl to {out_dir}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
