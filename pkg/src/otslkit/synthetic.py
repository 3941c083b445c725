"""Seeded synthetic records and detections for fixtures, tests and benchmarks."""
from __future__ import annotations

import random

from .dataset import SampleRecord
from .grid import COLUMN, ROW, Detection
from .otsl import random_valid, serialize

LANGUAGES = ("bengali", "chinese", "english", "gujarati", "hindi", "japanese", "kannada",
             "korean", "malayalam", "marathi", "tamil", "telugu", "urdu")
NOISE_ALPHABET = "FELUXN?fl <>"


def corrupt(text: str, rng: random.Random, rate: float) -> str:
    """Apply random substitutions, deletions and insertions at ``rate`` per character."""
    out = []
    for ch in text:
        r = rng.random()
        if r < rate / 3:
            continue
        if r < 2 * rate / 3:
            out.append(rng.choice(NOISE_ALPHABET))
        elif r < rate:
            out.append(ch)
            out.append(rng.choice(NOISE_ALPHABET))
        else:
            out.append(ch)
    return "".join(out)


def make_records(n: int, seed: int = 0, max_rows: int = 8, max_cols: int = 8,
                 span_prob: float = 0.3, empty_prob: float = 0.1, noise: float = 0.0,
                 languages=LANGUAGES) -> list[SampleRecord]:
    """MUSTARD-style records: gt_otsl, a prediction, the true grid and metadata."""
    rng = random.Random(seed)
    records = []
    for k in range(n):
        rows, cols = rng.randint(1, max_rows), rng.randint(1, max_cols)
        gt = serialize(random_valid(rows, cols, rng.randrange(2**31), span_prob, empty_prob))
        pred = corrupt(gt, rng, noise) if noise else gt
        records.append(SampleRecord(
            id=f"t{k:05d}", gt_otsl=gt, pred_otsl=pred, gt_grid=(rows, cols),
            language=rng.choice(languages), modality=rng.choice(("document", "scene")),
            split="test",
        ))
    return records


def make_detections(rows: int, cols: int, rng: random.Random, width: float = 800.0,
                    height: float = 600.0, duplicates: int = 0, low_score: int = 0,
                    others: int = 0) -> list[Detection]:
    """Row/column boxes tiling a table, plus optional near-duplicate rows and noise."""
    dets = []
    rh, cw = height / rows, width / cols
    for i in range(rows):
        dets.append(Detection(ROW, rng.uniform(0.6, 1.0), (0.0, i * rh, width, (i + 1) * rh)))
    for j in range(cols):
        dets.append(Detection(COLUMN, rng.uniform(0.6, 1.0), (j * cw, 0.0, (j + 1) * cw, height)))
    for _ in range(duplicates):
        i = rng.randrange(rows)
        shift = rng.uniform(-0.1, 0.1) * rh
        y0, y1 = max(0.0, i * rh + shift), min(height, (i + 1) * rh + shift)
        dets.append(Detection(ROW, rng.uniform(0.3, 0.55), (0.0, y0, width, y1)))
    for _ in range(low_score):
        label = rng.choice((ROW, COLUMN))
        dets.append(Detection(label, rng.uniform(0.0, 0.2), (10.0, 10.0, 50.0, 50.0)))
    for _ in range(others):
        dets.append(Detection("table spanning cell", rng.uniform(0.5, 1.0), (0.0, 0.0, width / 2, rh)))
    rng.shuffle(dets)
    return dets
