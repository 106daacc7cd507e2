"""Yearlong load/PV time series, scenario construction and pseudo-measurement statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .feeder import NetworkModel

HOURS_PER_YEAR = 8760
# hours 4344..4511: 1-7 July of a non-leap year
SUMMER_WEEK = range(4344, 4344 + 168)


class ProfileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TimeSeries:
    values: np.ndarray
    label: str = ""
    resolution_hours: float = 1.0

    def __len__(self) -> int:
        return self.values.size


def parse_profile(text: str, label: str = "", yearlong: bool = False) -> TimeSeries:
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError:
            raise ProfileError(f"{label or 'profile'} line {lineno}: not a number: {line!r}") from None
        if not math.isfinite(v):
            raise ProfileError(f"{label or 'profile'} line {lineno}: non-finite value {line!r}")
        if v < 0:
            raise ProfileError(f"{label or 'profile'} line {lineno}: negative value {v}")
        values.append(v)
    if yearlong and len(values) != HOURS_PER_YEAR:
        raise ProfileError(f"{label or 'profile'}: expected {HOURS_PER_YEAR} hourly values, got {len(values)}")
    return TimeSeries(np.array(values), label)


def load_profile(source: str | Path, yearlong: bool = False) -> TimeSeries:
    """Read one value per line; ``#`` starts a comment.

    ``source`` may also name a bundled profile (``load_multiplier``,
    ``pv_hinesburg_synthetic``).
    """
    path = Path(source)
    if not path.exists():
        bundled = resources.files("dsse.data.profiles") / f"{source}.txt"
        if not bundled.is_file():
            raise ProfileError(f"no such profile file or bundled profile: {source}")
        return parse_profile(bundled.read_text(), str(source), yearlong)
    return parse_profile(path.read_text(), path.stem, yearlong)


def normalize_pv(series: TimeSeries, target_peak: float) -> TimeSeries:
    peak = series.values.max(initial=0.0)
    if peak <= 0:
        raise ProfileError("cannot normalize an all-zero series")
    values = series.values * (target_peak / peak)
    values[np.argmax(series.values)] = target_peak
    return TimeSeries(values, series.label, series.resolution_hours)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Load-positive per-unit node demand for one hour."""

    k: int
    alpha: float
    s: float
    epsilon: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    @property
    def injections(self) -> np.ndarray:
        """Generation-positive complex injections for the power flow."""
        return -(self.P + 1j * self.Q)


def _epsilon(seed: int, k: int, bound: float, n: int) -> np.ndarray:
    # Philox is counter based: the key fixes the stream for (seed, k) independently of batch order
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, k], dtype=np.uint64)))
    return gen.uniform(-bound, bound, size=n)


def build_scenario(
    k: int, L: TimeSeries, S: TimeSeries, c: float, seed: int, model: NetworkModel
) -> Scenario:
    if len(L) != len(S):
        raise ProfileError("load and solar series differ in length")
    if not 0 <= k < len(L):
        raise IndexError(f"scenario index {k} outside [0, {len(L)})")
    if c < 0:
        raise ValueError("c must be non-negative")
    alpha = float(L.values[k])
    s = float(S.values[k])
    eps = _epsilon(seed, k, c * alpha, model.n_nodes)
    Pbar = model.nominal_load.real
    Qbar = model.nominal_load.imag
    P = (alpha - s) * Pbar + eps * Pbar
    Q = alpha * Qbar + eps * Qbar
    return Scenario(k, alpha, s, eps, P, Q)


def build_scenarios(
    L: TimeSeries, S: TimeSeries, c: float, seed: int, model: NetworkModel, indices=None
) -> list[Scenario]:
    if indices is None:
        indices = range(len(L))
    return [build_scenario(k, L, S, c, seed, model) for k in indices]


@dataclass(frozen=True, eq=False)
class PseudoStats:
    P_hat: np.ndarray
    Q_hat: np.ndarray
    Sigma_P: np.ndarray
    Sigma_Q: np.ndarray

    def scaled(self, factor: float) -> "PseudoStats":
        """Same means, covariances multiplied by ``factor``."""
        return PseudoStats(self.P_hat, self.Q_hat, self.Sigma_P * factor, self.Sigma_Q * factor)


def pseudo_stats(scenarios: list[Scenario], window=None) -> PseudoStats:
    """Sample mean and unbiased sample covariance of P^k and Q^k.

    ``window`` optionally restricts the statistics to the scenarios whose
    index ``k`` falls in it.
    """
    if window is not None:
        keep = set(window)
        scenarios = [sc for sc in scenarios if sc.k in keep]
    if len(scenarios) < 2:
        raise ValueError("pseudo_stats needs at least two scenarios")
    P = np.array([sc.P for sc in scenarios])
    Q = np.array([sc.Q for sc in scenarios])
    return PseudoStats(P.mean(axis=0), Q.mean(axis=0), _cov(P), _cov(Q))


def _cov(X: np.ndarray) -> np.ndarray:
    D = X - X.mean(axis=0)
    C = D.T @ D / (X.shape[0] - 1)
    return (C + C.T) / 2
