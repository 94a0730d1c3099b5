"""Monte Carlo check of the min-rule separation bound.

For a threshold tau between the cross-speaker mean similarity mu' and the
same-speaker mean mu0, with margin ``delta = min(mu0 - tau, tau - mu')``:

    P(false drift | same speaker)      <= 2 exp(-(mu0 - tau)^2 / 2 sigma^2)
    P(missed drift | speaker change)   <= 2 exp(-(tau - mu')^2 / 2 sigma^2)
    sum of the two                     <= 4 exp(-delta^2 / 2 sigma^2)

Two simulation channels: similarity scores drawn directly as clipped
Gaussians, and unit vectors drawn around class directions on the sphere with
concentrations calibrated to hit the requested similarity moments.

``total_empirical`` is the sum of the two class-conditional error rates. It
upper-bounds the misclassification rate under any class prior, so comparing
it to the total bound is the strictest reading of the inequality.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .core import DriftBenchError, new_rng

Z95 = 1.959963984540054
CHUNK = 20_000


class CalibrationError(DriftBenchError):
    def __init__(self, message: str, achieved: dict[str, float]):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class BoundConfig:
    mu0: float
    mu_prime: float
    sigma: float
    tau: float
    trials: int = 100_000
    mode: str = "score"
    d: int = 64

    def __post_init__(self):
        if not -1.0 < self.mu_prime < self.tau < self.mu0 < 1.0:
            raise ValueError(
                f"need -1 < mu' ({self.mu_prime}) < tau ({self.tau}) < mu0 ({self.mu0}) < 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.trials <= 0:
            raise ValueError("trials must be positive")
        if self.mode not in ("score", "sphere"):
            raise ValueError("mode must be 'score' or 'sphere'")
        if self.mode == "sphere" and self.d < 2:
            raise ValueError("sphere mode needs d >= 2")

    @property
    def delta(self) -> float:
        return min(self.mu0 - self.tau, self.tau - self.mu_prime)


def type1_bound(mu0: float, tau: float, sigma: float) -> float:
    return 2.0 * math.exp(-((mu0 - tau) ** 2) / (2.0 * sigma ** 2))


def type2_bound(mu_prime: float, tau: float, sigma: float) -> float:
    return 2.0 * math.exp(-((tau - mu_prime) ** 2) / (2.0 * sigma ** 2))


def total_bound(delta: float, sigma: float) -> float:
    return 4.0 * math.exp(-(delta ** 2) / (2.0 * sigma ** 2))


@dataclass(frozen=True)
class BoundReport:
    config: BoundConfig
    seed: int
    delta: float
    type1_errors: int
    type2_errors: int
    type1_empirical: float
    type1_bound: float
    type2_empirical: float
    type2_bound: float
    total_empirical: float
    total_bound: float
    sum_bound: float
    balanced_error: float
    half_width: float
    realized: dict[str, float] = field(default_factory=dict)
    calibration: dict[str, Any] | None = None

    @property
    def trials(self) -> int:
        return self.config.trials

    @property
    def within_bound(self) -> bool:
        return self.total_empirical <= self.total_bound + self.half_width

    def smoothed_log_error(self) -> float:
        """log of (errors + 1/2) / (trials + 1); finite even when no errors occur."""
        return math.log((self.type1_errors + self.type2_errors + 0.5) / (self.trials + 1))

    def to_record(self) -> dict[str, Any]:
        rec = asdict(self)
        rec["config"] = asdict(self.config)
        return rec


def _report(cfg: BoundConfig, seed: int, k1: int, k2: int, realized, calibration=None) -> BoundReport:
    n = cfg.trials
    p1, p2 = k1 / n, k2 / n
    hw = Z95 * math.sqrt(p1 * (1 - p1) / n + p2 * (1 - p2) / n)
    b1 = type1_bound(cfg.mu0, cfg.tau, cfg.sigma)
    b2 = type2_bound(cfg.mu_prime, cfg.tau, cfg.sigma)
    return BoundReport(
        config=cfg, seed=seed, delta=cfg.delta,
        type1_errors=k1, type2_errors=k2,
        type1_empirical=p1, type1_bound=b1,
        type2_empirical=p2, type2_bound=b2,
        total_empirical=p1 + p2, total_bound=total_bound(cfg.delta, cfg.sigma),
        sum_bound=b1 + b2, balanced_error=(p1 + p2) / 2, half_width=hw,
        realized=realized, calibration=calibration,
    )


def _chunks(trials: int) -> Iterable[tuple[int, int]]:
    for i, start in enumerate(range(0, trials, CHUNK)):
        yield i, min(CHUNK, trials - start)


class _Moments:
    """Exact running sums for mean/std of the simulated similarities."""

    def __init__(self):
        self.n = 0
        self.s = 0.0
        self.ss = 0.0

    def add(self, x: np.ndarray):
        self.n += x.size
        self.s += float(x.sum())
        self.ss += float((x * x).sum())

    def summary(self) -> tuple[float, float]:
        mean = self.s / self.n
        return mean, math.sqrt(max(self.ss / self.n - mean * mean, 0.0))


def _errors(same12, same23, cross12, cross23, tau):
    k1 = int(np.count_nonzero(np.minimum(same12, same23) < tau))
    k2 = int(np.count_nonzero(np.minimum(cross12, cross23) >= tau))
    return k1, k2


def _realized(same: _Moments, cross: _Moments) -> dict[str, float]:
    m0, s0 = same.summary()
    m1, s1 = cross.summary()
    return {"same_mean": m0, "same_std": s0, "cross_mean": m1, "cross_std": s1}


def simulate_score_level(cfg: BoundConfig, seed: int = 0) -> BoundReport:
    """Draw both adjacent similarities as independent clipped Gaussians per trial."""
    k1 = k2 = 0
    same, cross = _Moments(), _Moments()
    for i, n in _chunks(cfg.trials):
        rng = new_rng(seed, i)
        s = np.clip(rng.normal(cfg.mu0, cfg.sigma, size=(2, n)), -1.0, 1.0)
        c = np.clip(rng.normal(cfg.mu_prime, cfg.sigma, size=(2, n)), -1.0, 1.0)
        a, b = _errors(s[0], s[1], c[0], c[1], cfg.tau)
        k1 += a
        k2 += b
        same.add(s)
        cross.add(c)
    return _report(replace(cfg, mode="score"), seed, k1, k2, _realized(same, cross))


# ---------------------------------------------------------------------------
# Sphere-level simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereParams:
    """Each embedding is ``c*u + sqrt(1 - c^2)*w`` with ``w`` uniform on the sphere
    orthogonal to its class direction ``u`` and ``c = clip(concentration + spread*z, -1, 1)``.

    Same-speaker trials place all three segments around one direction. Drift
    trials use the pattern A, B, A with ``u_A . u_B = cross_direction_cos``, so
    both adjacent pairs straddle the speaker change.
    """
    same_concentration: float
    same_spread: float
    cross_direction_cos: float
    cross_concentration: float
    cross_spread: float


def _perp_unit(g: np.ndarray, u: np.ndarray) -> np.ndarray:
    w = g - np.outer(g @ u, u)
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def _around(u, z, g, mean, spread):
    c = np.clip(mean + spread * z, -1.0, 1.0)
    s = np.sqrt(1.0 - c * c)
    return c[:, None] * u[None, :] + s[:, None] * _perp_unit(g, u)


def _directions(d: int, rho: float) -> tuple[np.ndarray, np.ndarray]:
    # cosines are rotation invariant, so fixed class directions lose nothing
    ua = np.zeros(d)
    ua[0] = 1.0
    ub = np.zeros(d)
    ub[0], ub[1] = rho, math.sqrt(max(1.0 - rho * rho, 0.0))
    return ua, ub


def _rowdot(a, b):
    return np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0)


def _same_sims(d, z, g, conc, spread):
    ua, _ = _directions(d, 1.0)
    e = [_around(ua, z[i], g[i], conc, spread) for i in range(3)]
    return _rowdot(e[0], e[1]), _rowdot(e[1], e[2])


def _cross_sims(d, z, g, rho, conc, spread):
    ua, ub = _directions(d, rho)
    e = [_around(u, z[i], g[i], conc, spread) for i, u in enumerate((ua, ub, ua))]
    return _rowdot(e[0], e[1]), _rowdot(e[1], e[2])


def _sphere_sims(params: SphereParams, d: int, rng: np.random.Generator, n: int):
    z = rng.standard_normal((6, n))
    g = rng.standard_normal((6, n, d))
    s12, s23 = _same_sims(d, z[:3], g[:3], params.same_concentration, params.same_spread)
    c12, c23 = _cross_sims(d, z[3:], g[3:], params.cross_direction_cos,
                           params.cross_concentration, params.cross_spread)
    return s12, s23, c12, c23


def calibrate_sphere(cfg: BoundConfig, seed: int = 0, n: int = 10_000,
                     rel_tol: float = 0.05) -> tuple[SphereParams, dict[str, float]]:
    """Fit concentrations so simulated similarity moments match (mu0, mu', sigma).

    Same-speaker and drift populations are fitted separately by least squares on
    relative moment errors, with common random numbers so each objective is a
    deterministic function of its parameters. Starting values come from the
    small-noise expansion mean ~ c^2 rho, var ~ 2 c^2 spread^2 rho^2.
    Raises CalibrationError when any moment misses by more than ``rel_tol``.
    """
    d = cfg.d
    rng = new_rng(seed, 0xCA1)
    z = rng.standard_normal((6, n))
    g = rng.standard_normal((6, n, d))
    opts = dict(diff_step=1e-3, xtol=1e-10, ftol=1e-10)

    def moments(pair):
        x = np.concatenate(pair)
        return float(x.mean()), float(x.std())

    def same_resid(theta):
        m, s = moments(_same_sims(d, z[:3], g[:3], *theta))
        return np.array([(m - cfg.mu0) / abs(cfg.mu0), (s - cfg.sigma) / cfg.sigma])

    def cross_resid(theta):
        m, s = moments(_cross_sims(d, z[3:], g[3:], *theta))
        return np.array([(m - cfg.mu_prime) / max(abs(cfg.mu_prime), 1e-3), (s - cfg.sigma) / cfg.sigma])

    c0 = math.sqrt(max(cfg.mu0, 0.0))
    same_fit = least_squares(same_resid, [c0, cfg.sigma / (c0 * math.sqrt(2) + 1e-9)],
                             bounds=([0.0, 0.0], [1.0, 1.0]), **opts)
    rho0 = float(np.clip(cfg.mu_prime / max(c0 * c0, 1e-9), -1.0, 1.0))
    cross_start = [rho0, c0, min(cfg.sigma / (c0 * max(abs(rho0), 0.1) * math.sqrt(2) + 1e-9), 1.0)]
    cross_fit = least_squares(cross_resid, cross_start,
                              bounds=([-1.0, 0.0, 0.0], [1.0, 1.0, 1.0]), **opts)
    params = SphereParams(*(float(v) for v in same_fit.x), *(float(v) for v in cross_fit.x))
    sm, ss = moments(_same_sims(d, z[:3], g[:3], *same_fit.x))
    cm, cs = moments(_cross_sims(d, z[3:], g[3:], *cross_fit.x))
    achieved = {"same_mean": sm, "same_std": ss, "cross_mean": cm, "cross_std": cs}
    worst = max(np.max(np.abs(same_resid(same_fit.x))), np.max(np.abs(cross_resid(cross_fit.x))))
    if worst > rel_tol:
        raise CalibrationError(
            f"cannot reach mu0={cfg.mu0}, mu'={cfg.mu_prime}, sigma={cfg.sigma} in d={d} "
            f"within {rel_tol:.0%}: achieved {achieved}", achieved)
    return params, achieved


def simulate_sphere_level(cfg: BoundConfig, seed: int = 0, params: SphereParams | None = None) -> BoundReport:
    """Cosines between actual unit vectors; ``params`` skips calibration when given."""
    calibration = None
    if params is None:
        params, achieved = calibrate_sphere(cfg, seed)
        calibration = {"params": asdict(params), "achieved": achieved, "rel_tol": 0.05}
    else:
        calibration = {"params": asdict(params), "achieved": None, "rel_tol": None}
    k1 = k2 = 0
    same, cross = _Moments(), _Moments()
    step = max(1, min(CHUNK, 2_000_000 // (6 * cfg.d)))
    for i, start in enumerate(range(0, cfg.trials, step)):
        n = min(step, cfg.trials - start)
        s12, s23, c12, c23 = _sphere_sims(params, cfg.d, new_rng(seed, i), n)
        a, b = _errors(s12, s23, c12, c23, cfg.tau)
        k1 += a
        k2 += b
        same.add(np.concatenate([s12, s23]))
        cross.add(np.concatenate([c12, c23]))
    return _report(replace(cfg, mode="sphere"), seed, k1, k2, _realized(same, cross), calibration)


def simulate(cfg: BoundConfig, seed: int = 0) -> BoundReport:
    return simulate_sphere_level(cfg, seed) if cfg.mode == "sphere" else simulate_score_level(cfg, seed)


def sweep_bound(mu0: float, mu_prime: float, sigmas: Sequence[float], taus: Sequence[float],
                trials: int = 100_000, seed: int = 0, mode: str = "score", d: int = 64) -> list[BoundReport]:
    """One report per (sigma, tau), ordered by sigma then tau; every point reuses ``seed``."""
    grid = [(s, t) for s in sorted(set(sigmas)) for t in sorted(set(taus))]
    if not grid:
        raise ValueError("empty sweep grid")
    configs = [BoundConfig(mu0, mu_prime, s, t, trials, mode, d) for s, t in grid]
    return [simulate(c, seed) for c in configs]


def log_error_slope(reports: Sequence[BoundReport]) -> float:
    """Least-squares slope of smoothed log total error against delta^2."""
    x = np.array([r.delta ** 2 for r in reports])
    y = np.array([r.smoothed_log_error() for r in reports])
    if len(reports) < 2 or np.ptp(x) == 0:
        raise ValueError("need at least two distinct margins to fit a slope")
    return float(np.polyfit(x, y, 1)[0])


REPORT_COLUMNS = ("mu0", "mu_prime", "sigma", "tau", "delta", "type1_emp", "type1_bnd",
                  "type2_emp", "type2_bnd", "total_emp", "total_bnd", "half_width", "ok")


def report_row(r: BoundReport) -> list[str]:
    c = r.config
    return [f"{c.mu0:.4f}", f"{c.mu_prime:.4f}", f"{c.sigma:.4f}", f"{c.tau:.4f}", f"{r.delta:.4f}",
            f"{r.type1_empirical:.6f}", f"{r.type1_bound:.3e}",
            f"{r.type2_empirical:.6f}", f"{r.type2_bound:.3e}",
            f"{r.total_empirical:.6f}", f"{r.total_bound:.3e}", f"{r.half_width:.2e}",
            "yes" if r.within_bound else "NO"]
