"""Adjacent-segment cosine similarities and threshold classifiers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .core import DriftBenchError, DriftLabel
from .embed import Embedding, EmbeddingMap

_TOL = 1e-9


class DimensionMismatchError(DriftBenchError):
    pass


class ZeroNormError(DriftBenchError):
    pass


def _vec(e) -> np.ndarray:
    return e.vector if isinstance(e, Embedding) else np.asarray(e, dtype=np.float64)


def cosine(e_i, e_j) -> float:
    """Cosine similarity of two embeddings (or plain vectors), clamped to [-1, 1]."""
    a, b = _vec(e_i), _vec(e_j)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimensions differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroNormError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(a / na, b / nb), -1.0, 1.0))


@dataclass(frozen=True)
class SimilarityPair:
    sim_12: float
    sim_23: float
    sample_id: str = ""
    encoder_id: str = ""

    def __post_init__(self):
        for name in ("sim_12", "sim_23"):
            v = getattr(self, name)
            if not math.isfinite(v) or abs(v) > 1.0 + _TOL:
                raise ValueError(f"{name}={v} is not a finite value in [-1, 1]")

    @property
    def min_sim(self) -> float:
        return min(self.sim_12, self.sim_23)

    def to_record(self) -> dict[str, Any]:
        return {"sample_id": self.sample_id, "encoder_id": self.encoder_id,
                "sim_12": self.sim_12, "sim_23": self.sim_23}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "SimilarityPair":
        return cls(float(rec["sim_12"]), float(rec["sim_23"]),
                   str(rec.get("sample_id", "")), str(rec.get("encoder_id", "")))


def similarity_pair(e1: Embedding, e2: Embedding, e3: Embedding) -> SimilarityPair:
    encoders = {e.encoder_id for e in (e1, e2, e3)}
    if len(encoders) != 1:
        raise ValueError(f"segments come from different encoders: {sorted(encoders)}")
    return SimilarityPair(cosine(e1, e2), cosine(e2, e3), e1.source_sample_id, e1.encoder_id)


def pairs_from_embeddings(emb: EmbeddingMap) -> list[SimilarityPair]:
    return [similarity_pair(*emb[sid]) for sid in emb]


@dataclass(frozen=True)
class DetectorConfig:
    tau: float = 0.90

    def __post_init__(self):
        if not -1.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (-1, 1)")


def min_rule_classify(p: SimilarityPair, cfg: DetectorConfig) -> DriftLabel:
    return DriftLabel(int(p.min_sim < cfg.tau))


# ---------------------------------------------------------------------------
# Metrics and threshold sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def of(cls, y_true: Sequence[int], y_pred: Sequence[int]) -> "Confusion":
        t = np.asarray(y_true, dtype=bool)
        p = np.asarray(y_pred, dtype=bool)
        return cls(int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(~t & ~p)), int(np.sum(t & ~p)))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        # no predicted positives: 0, which also makes F1 0 whenever positives exist
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 0.0


@dataclass(frozen=True)
class SweepRow:
    tau: float
    accuracy: float
    f1: float
    precision: float
    recall: float
    predicted_drift: int


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    best: SweepRow

    def row_at(self, tau: float) -> SweepRow:
        for r in self.rows:
            if math.isclose(r.tau, tau, abs_tol=1e-12):
                return r
        raise KeyError(tau)


def parse_grid(text: str) -> list[float]:
    """``"start:stop:step"`` (inclusive of stop when it lands on the grid) or ``"a,b,c"``."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    return [float(x) for x in text.split(",") if x.strip()]


def sweep_thresholds(pairs: Iterable[tuple[SimilarityPair, int]], taus: Iterable[float]) -> SweepResult:
    """Accuracy and F1 of the min rule at each threshold; best F1 ties go to the smaller tau."""
    pairs = list(pairs)
    taus = sorted(set(float(t) for t in taus))
    if not pairs:
        raise ValueError("no labeled pairs to sweep")
    if not taus:
        raise ValueError("empty threshold grid")
    mins = np.array([p.min_sim for p, _ in pairs])
    y = np.array([int(lbl) for _, lbl in pairs])
    rows = []
    for tau in taus:
        pred = (mins < tau).astype(int)
        c = Confusion.of(y, pred)
        rows.append(SweepRow(tau, c.accuracy, c.f1, c.precision, c.recall, int(pred.sum())))
    best = rows[0]
    for r in rows[1:]:
        if r.f1 > best.f1:
            best = r
    return SweepResult(tuple(rows), best)
