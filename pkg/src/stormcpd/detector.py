"""Online change-point detection via direct density-ratio estimation.

A small binary classifier is trained incrementally to tell a lagged
reference mini-batch from the current test mini-batch.  Its log-odds give
a Kullback-Leibler-flavored dissimilarity score between the two batches;
a sliding running mean of that score is the detection signal, which rises
when the observation distribution changes and decays back afterwards.

The classifier is a one-hidden-layer perceptron (tanh hidden units,
logistic output) trained by plain full-batch gradient descent on the
two current mini-batches at every detector step, scoring strictly before
each weight update.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NotWarmedUp, SeriesTooShort

EPS = 1e-6  # classifier outputs are clipped to [EPS, 1-EPS]


@dataclass
class DetectorConfig:
    k: int  # window length (observations per window vector)
    n: int  # mini-batch size
    l: int  # lag between reference and test batches
    learning_rate: float = 0.01
    hidden: int = 32
    train_steps: int = 10
    normalize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1", "detector.k")
        if self.n < 1:
            raise ConfigError("n must be >= 1", "detector.n")
        if self.l < self.n:
            raise ConfigError("l must be >= n", "detector.l")
        if self.l % self.n != 0:
            raise ConfigError("l must be divisible by n", "detector.l")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0", "detector.learning_rate")
        if self.hidden < 1:
            raise ConfigError("hidden width must be >= 1", "detector.hidden")
        if self.train_steps < 0:
            raise ConfigError("train_steps must be >= 0", "detector.train_steps")

    @property
    def warmup(self) -> int:
        """First scoreable time index (1-based): k + n + l."""
        return self.k + self.n + self.l


class Classifier:
    """One-hidden-layer perceptron scoring windows into (0, 1)."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.w1 = rng.normal(0.0, 0.1, size=(in_dim, hidden))
        self.b1 = np.zeros(hidden)
        self.w2 = rng.normal(0.0, 0.1, size=hidden)
        self.b2 = 0.0

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Clipped probability that each row belongs to the test batch."""
        h = np.tanh(x @ self.w1 + self.b1)
        z = h @ self.w2 + self.b2
        f = 1.0 / (1.0 + np.exp(-z))
        return np.clip(f, EPS, 1.0 - EPS)

    # -- parameter vector helpers (used by training and gradient checks) --

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    def set_flat(self, theta: np.ndarray) -> None:
        i, h = self.w1.shape
        self.w1 = theta[: i * h].reshape(i, h).copy()
        self.b1 = theta[i * h : i * h + h].copy()
        self.w2 = theta[i * h + h : i * h + 2 * h].copy()
        self.b2 = float(theta[-1])


def loss(clf: Classifier, ref: np.ndarray, test: np.ndarray) -> float:
    """Cross-entropy for labeling ref as 0 and test as 1.

    L = -(1/n) sum log(1 - f(ref)) - (1/n) sum log f(test); the output
    clipping keeps both logs finite.
    """
    f_ref = clf.predict(ref)
    f_test = clf.predict(test)
    return float(
        -np.mean(np.log(1.0 - f_ref)) - np.mean(np.log(f_test))
    )


def loss_gradient(clf: Classifier, ref: np.ndarray, test: np.ndarray) -> np.ndarray:
    """Analytic gradient of loss() w.r.t. the flat parameter vector."""
    x = np.vstack([ref, test])
    h = np.tanh(x @ clf.w1 + clf.b1)
    z = h @ clf.w2 + clf.b2
    f = 1.0 / (1.0 + np.exp(-z))
    # dL/dz: ref rows contribute f/n_ref, test rows (f-1)/n_test; rows where
    # the clip is active contribute nothing
    n_ref, n_test = len(ref), len(test)
    dz = np.empty(len(x))
    dz[:n_ref] = f[:n_ref] / n_ref
    dz[n_ref:] = (f[n_ref:] - 1.0) / n_test
    clipped = (f <= EPS) | (f >= 1.0 - EPS)
    dz[clipped] = 0.0

    dw2 = h.T @ dz
    db2 = dz.sum()
    dh = np.outer(dz, clf.w2)
    dpre = dh * (1.0 - h * h)
    dw1 = x.T @ dpre
    db1 = dpre.sum(axis=0)
    return np.concatenate([dw1.ravel(), db1, dw2, [db2]])


def score(clf: Classifier, ref: np.ndarray, test: np.ndarray) -> float:
    """Symmetrized KL-style dissimilarity from classifier log-odds.

    D = (1/n) sum_ref log((1-f)/f) + (1/n) sum_test log(f/(1-f)).
    Computed from one log-odds array per batch so that identical batches
    cancel exactly and swapping the batches flips the sign exactly.
    """
    odds_ref = _log_odds(clf, ref)
    odds_test = _log_odds(clf, test)
    return float(np.mean(odds_test) - np.mean(odds_ref))


def _log_odds(clf: Classifier, x: np.ndarray) -> np.ndarray:
    f = clf.predict(x)
    return np.log(f) - np.log(1.0 - f)


def build_windows(values: np.ndarray, k: int) -> np.ndarray:
    """Stack k consecutive observations into window vectors.

    Row i of the result is the concatenation [x(t), x(t-1), ..., x(t-k+1)]
    for t = i + k - 1 (0-based): most recent observation first.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    if T < k:
        raise SeriesTooShort(f"need at least k={k} observations, got {T}")
    cols = [values[k - 1 - j : T - j] for j in range(k)]
    return np.hstack(cols)


@dataclass
class DetectorState:
    """Mutable state carried across detector steps."""

    config: DetectorConfig
    clf: Classifier
    t: int  # 1-based time index of the next step
    d_buffer: deque = field(default_factory=deque)  # last l/n + 1 raw scores
    d_bar: float = 0.0

    @classmethod
    def initial(cls, config: DetectorConfig, in_dim: int) -> "DetectorState":
        rng = np.random.default_rng(config.seed)
        clf = Classifier(in_dim, config.hidden, rng)
        buffer = deque([0.0] * (config.l // config.n + 1))
        return cls(config=config, clf=clf, t=config.warmup, d_buffer=buffer)


def step(state: DetectorState, ref: np.ndarray, test: np.ndarray) -> float:
    """One detector iteration: score, update the running mean, then train.

    Returns the updated running mean d_bar(t).  The raw score is computed
    with the pre-update weights, matching the published iteration order.
    """
    cfg = state.config
    if state.t < cfg.warmup:
        raise NotWarmedUp(f"step at t={state.t} before warm-up t={cfg.warmup}")
    if len(ref) != cfg.n or len(test) != cfg.n:
        raise ConfigError(f"mini-batches must have exactly n={cfg.n} rows")

    d = score(state.clf, ref, test)
    oldest = state.d_buffer.popleft()  # d(t - l - n)
    state.d_buffer.append(d)
    state.d_bar += (d - oldest) / cfg.l

    theta = state.clf.get_flat()
    for _ in range(cfg.train_steps):
        theta = theta - cfg.learning_rate * loss_gradient(state.clf, ref, test)
        state.clf.set_flat(theta)
    state.t += cfg.n
    return state.d_bar


def normalize_running(values: np.ndarray) -> np.ndarray:
    """Causal per-channel z-score: each row is standardized by the mean and
    std of the rows seen so far (itself included)."""
    values = np.asarray(values, dtype=float)
    counts = np.arange(1, len(values) + 1, dtype=float)[:, None]
    means = np.cumsum(values, axis=0) / counts
    sq_means = np.cumsum(values**2, axis=0) / counts
    var = np.maximum(sq_means - means**2, 0.0)
    std = np.sqrt(var)
    out = np.zeros_like(values)
    ok = std > 1e-12
    out[ok] = (values[ok] - means[ok]) / std[ok]
    return out


@dataclass
class ScorePoint:
    index: int  # 0-based row index of the test window's last observation
    d: float  # raw dissimilarity at this step
    d_bar: float  # running-mean detection score


def run(values: np.ndarray, config: DetectorConfig) -> list[ScorePoint]:
    """Run the full detection loop over a (T, d) series.

    Scores are emitted every n observations starting at the warm-up index
    k + n + l; the score at step i belongs to the test window ending at
    row k + n + l - 1 + i*n (0-based).
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    if T < config.warmup:
        raise SeriesTooShort(
            f"series of length {T} is shorter than warm-up k+n+l={config.warmup}"
        )
    if config.normalize:
        values = normalize_running(values)

    windows = build_windows(values, config.k)  # row w ends at obs w + k - 1
    state = DetectorState.initial(config, windows.shape[1])
    k, n, l = config.k, config.n, config.l

    points: list[ScorePoint] = []
    t = config.warmup  # 1-based observation index of the test batch's end
    while t <= T:
        test = windows[t - n - k + 1 : t - k + 1]
        ref = windows[t - l - n - k + 1 : t - l - k + 1]
        d_bar = step(state, ref, test)
        points.append(ScorePoint(index=t - 1, d=state.d_buffer[-1], d_bar=d_bar))
        t += n
    return points
