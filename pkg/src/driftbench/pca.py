"""PCA reduction of segment embeddings for the reduced-vector baseline."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core import DriftBenchError


class RankDeficiencyError(DriftBenchError):
    pass


def _orient(components: np.ndarray) -> np.ndarray:
    """Flip each row so its first coordinate with magnitude above 1e-12 is positive."""
    out = components.copy()
    for row in out:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return out


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,), descending
    explained_variance_fraction: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]

    def save(self, path: str | os.PathLike, comment: str = "") -> None:
        """Plain text: header ``d k fraction var_1 .. var_k``, the mean row, one row per component.

        An optional ``comment`` goes first as a ``#`` line; ``load`` skips those.
        """
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            var = " ".join(repr(float(x)) for x in self.explained_variance)
            fh.write(f"{self.d} {self.k} {self.explained_variance_fraction!r} {var}\n")
            fh.write(" ".join(repr(float(x)) for x in self.mean) + "\n")
            for row in self.components:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PcaModel":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
        d, k, frac = int(lines[0][0]), int(lines[0][1]), float(lines[0][2])
        var = np.array(lines[0][3:], dtype=np.float64)
        mean = np.array(lines[1], dtype=np.float64)
        comps = np.array(lines[2:2 + k], dtype=np.float64)
        if mean.size != d or comps.shape != (k, d) or var.size != k:
            raise DriftBenchError(f"{path}: PCA model shape does not match its header")
        return cls(mean, comps, var, frac)


def fit_pca(embeddings, k: int, rank_tol: float = 1e-10) -> PcaModel:
    """Top-``k`` eigenvectors of the sample covariance, by descending eigenvalue."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("embeddings must form an (n, d) array")
    n, d = x.shape
    if not 1 <= k <= d:
        raise ValueError(f"k must be in 1..{d}")
    if n <= k:
        raise ValueError(f"need more than k={k} embeddings, got {n}")
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False, bias=False).reshape(d, d)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals, kind="stable")[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    total = float(vals.sum())
    rank = int(np.sum(vals > rank_tol * max(vals[0], 1e-300))) if total > 0 else 0
    if k > rank:
        raise RankDeficiencyError(
            f"data has rank {rank}; attainable k: 1..{rank}" if rank else "data has zero variance")
    return PcaModel(mean, _orient(vecs[:, :k].T), vals[:k], float(vals[:k].sum() / total))


def project(model: PcaModel, e) -> np.ndarray:
    v = np.asarray(getattr(e, "vector", e), dtype=np.float64)
    if v.shape[-1] != model.d:
        raise ValueError(f"embedding has dimension {v.shape[-1]}, model expects {model.d}")
    return (v - model.mean) @ model.components.T


def reconstruct(model: PcaModel, z) -> np.ndarray:
    return model.mean + np.asarray(z) @ model.components


def sample_vector(model: PcaModel, e1, e2, e3) -> np.ndarray:
    """Concatenate the three projected segments in order: length 3k."""
    return np.concatenate([project(model, e) for e in (e1, e2, e3)])
