"""A small trainable scoring head: features -> logits over a codec's tokens.

The head is ``hidden = tanh(x W + b)`` followed by ``logits = hidden E^T``,
where row k of ``E`` is the embedding of score token k. It is trained with
mean cross-entropy against the target token of each record and read out
through the codec decoders.

Two embedding initializations are provided. ``warm`` rows carry an ordinal
structure: the first hidden unit sees a linear ramp in the token's rank and
every other unit a random mix of that ramp and a concave quadratic, all
scaled by ``WARM_SCALE``. This is how reused vocabulary tokens arrive with
pretrained structure. ``cold`` rows are small iid noise, as for freshly
added tokens.

Parameter file layout (little-endian)::

    magic   4 bytes  b"STKP"
    version uint16   1
    D, H, K uint32 x 3
    init    uint8    0 = warm, 1 = cold
    payload float64  E (K*H, row-major), W (D*H, row-major), b (H)
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .codec import ScoreTokenTable, decode, encode_score
from .dataset import DatasetManifest
from .errors import BadTarget, NonFiniteLoss, ParseError, ShapeMismatch

log = logging.getLogger(__name__)

INIT_MODES = ("warm", "cold")
COLD_INIT_SD = 0.01
WARM_SCALE = 20.0

_MAGIC = b"STKP"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIIB")


@dataclass
class ScorerParams:
    token_embeddings: np.ndarray  # (K, H)
    hidden_weights: np.ndarray  # (D, H)
    hidden_bias: np.ndarray  # (H,)
    init_mode: str = "warm"

    def __post_init__(self):
        self.token_embeddings = np.asarray(self.token_embeddings, dtype=np.float64)
        self.hidden_weights = np.asarray(self.hidden_weights, dtype=np.float64)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        E, W, b = self.token_embeddings, self.hidden_weights, self.hidden_bias
        if E.ndim != 2 or W.ndim != 2 or b.ndim != 1 or E.shape[1] != W.shape[1] or b.shape[0] != W.shape[1]:
            raise ShapeMismatch(f"inconsistent shapes E{E.shape} W{W.shape} b{b.shape}")

    @property
    def D(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def H(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def K(self) -> int:
        return self.token_embeddings.shape[0]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.token_embeddings, self.hidden_weights, self.hidden_bias

    def copy(self) -> ScorerParams:
        return ScorerParams(*(a.copy() for a in self.arrays()), init_mode=self.init_mode)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScorerParams):
            return NotImplemented
        return self.init_mode == other.init_mode and all(
            a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass
class Gradients:
    token_embeddings: np.ndarray
    hidden_weights: np.ndarray
    hidden_bias: np.ndarray

    def arrays(self):
        return self.token_embeddings, self.hidden_weights, self.hidden_bias

    def norm(self) -> float:
        return float(math.sqrt(sum(float(np.sum(g * g)) for g in self.arrays())))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    lr_schedule: str = "cosine"
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def lr_at(self, step: int, total_steps: int) -> float:
        if self.lr_schedule == "constant" or total_steps <= 1:
            return self.learning_rate
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def init_params(
    D: int, H: int, K: int, init_mode: str = "warm", seed: int = 0, warm_scale: float = WARM_SCALE
) -> ScorerParams:
    """Fresh parameters. Hidden weights and bias start at zero, so an untrained
    head emits all-zero logits and a uniform token distribution."""
    if min(D, H, K) < 1:
        raise ValueError("D, H and K must all be >= 1")
    if init_mode not in INIT_MODES:
        raise ValueError(f"init_mode must be one of {INIT_MODES}")
    rng = np.random.default_rng(seed)
    E = rng.normal(0.0, COLD_INIT_SD, size=(K, H))
    if init_mode == "warm":
        rank = np.linspace(-1.0, 1.0, K) if K > 1 else np.zeros(1)
        # unit 0 is a pure ramp in rank; every other unit a random mix of ramp and concave bump
        a = rng.normal(size=H) / math.sqrt(H)
        c = np.abs(rng.normal(size=H)) / math.sqrt(H)
        E += warm_scale * (np.outer(rank, a) + np.outer(1.0 / 3.0 - rank**2, c))
        E[:, 0] = warm_scale * rank
    return ScorerParams(E, np.zeros((D, H)), np.zeros(H), init_mode)


def _check_inputs(params: ScorerParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim not in (1, 2) or X.shape[-1] != params.D:
        raise ShapeMismatch(f"features of shape {X.shape} do not match D={params.D}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    return X


def forward(params: ScorerParams, x) -> np.ndarray:
    """Logits for one feature vector ``(D,)`` or a batch ``(N, D)``."""
    x = _check_inputs(params, x)
    hidden = np.tanh(x @ params.hidden_weights + params.hidden_bias)
    return hidden @ params.token_embeddings.T


def _check_targets(params: ScorerParams, X: np.ndarray, targets) -> np.ndarray:
    t = np.asarray(targets)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeMismatch("batch must be a nonempty (N, D) array")
    if t.shape != (X.shape[0],):
        raise ShapeMismatch(f"{t.shape[0] if t.ndim else 0} targets for {X.shape[0]} examples")
    if not np.issubdtype(t.dtype, np.integer) or np.any(t < 0) or np.any(t >= params.K):
        raise BadTarget(f"targets must be integers in 0..{params.K - 1}")
    return t.astype(np.int64)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def loss(params: ScorerParams, X, targets) -> float:
    """Mean cross-entropy of the target tokens."""
    X = _check_inputs(params, X)
    t = _check_targets(params, X, targets)
    logp = _log_softmax(forward(params, X))
    return float(-np.mean(logp[np.arange(len(t)), t]))


def loss_and_gradient(params: ScorerParams, X, targets) -> tuple[float, Gradients]:
    X = _check_inputs(params, X)
    t = _check_targets(params, X, targets)
    n = X.shape[0]
    E, W, b = params.arrays()
    hidden = np.tanh(X @ W + b)
    logp = _log_softmax(hidden @ E.T)
    rows = np.arange(n)
    value = float(-np.mean(logp[rows, t]))

    dlogits = np.exp(logp)
    dlogits[rows, t] -= 1.0
    dlogits /= n
    dE = dlogits.T @ hidden
    dpre = (dlogits @ E) * (1.0 - hidden * hidden)
    dW = X.T @ dpre
    db = dpre.sum(axis=0)
    return value, Gradients(dE, dW, db)


def gradient(params: ScorerParams, X, targets) -> Gradients:
    """Analytic gradient of :func:`loss` with respect to every parameter."""
    return loss_and_gradient(params, X, targets)[1]


@dataclass
class TrainResult:
    params: ScorerParams
    loss_curve: list[float]  # full-data loss after each epoch
    initial_loss: float


def train(params: ScorerParams, X, targets, config: TrainConfig) -> TrainResult:
    """Minibatch training; deterministic for a fixed seed and config."""
    X = _check_inputs(params, X)
    t = _check_targets(params, X, targets)
    params = params.copy()
    n = X.shape[0]
    steps_per_epoch = math.ceil(n / config.batch_size)
    total = steps_per_epoch * config.epochs
    rng = np.random.default_rng(config.seed)
    moments = [(np.zeros_like(a), np.zeros_like(a)) for a in params.arrays()]

    initial = loss(params, X, t)
    curve: list[float] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            value, grads = loss_and_gradient(params, X[idx], t[idx])
            if not math.isfinite(value):
                raise NonFiniteLoss(f"non-finite batch loss at epoch {epoch}, step {step} (lr={config.learning_rate})")
            lr = config.lr_at(step, total)
            step += 1
            for p, g, (m, v) in zip(params.arrays(), grads.arrays(), moments):
                if config.optimizer == "sgd":
                    p -= lr * g
                    continue
                m *= config.beta1
                m += (1.0 - config.beta1) * g
                v *= config.beta2
                v += (1.0 - config.beta2) * g * g
                m_hat = m / (1.0 - config.beta1**step)
                v_hat = v / (1.0 - config.beta2**step)
                p -= lr * m_hat / (np.sqrt(v_hat) + config.eps)
        epoch_loss = loss(params, X, t)
        if not math.isfinite(epoch_loss):
            raise NonFiniteLoss(
                f"non-finite loss after epoch {epoch}; last finite value {curve[-1] if curve else initial}"
            )
        curve.append(epoch_loss)
        log.debug("epoch %d loss %.6f", epoch, epoch_loss)
    return TrainResult(params, curve, initial)


def predict_score(params: ScorerParams, x, table: ScoreTokenTable, mode: str = "expectation"):
    """Forward pass followed by codec decoding."""
    if params.K != table.size:
        raise ShapeMismatch(f"params have K={params.K} but codec {table.strategy.name} has {table.size} tokens")
    return decode(forward(params, x), table, mode)


# ---------------------------------------------------------------------------
# manifests and feature stores


@dataclass(frozen=True)
class FeatureStore:
    """Feature rows keyed by record id."""

    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != len(self.ids):
            raise ShapeMismatch(f"{len(self.ids)} ids for a feature matrix of shape {m.shape}")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def rows_for(self, manifest: DatasetManifest) -> np.ndarray:
        index = {k: i for i, k in enumerate(self.ids)}
        try:
            return self.matrix[[index[r.id] for r in manifest.records]]
        except KeyError as exc:
            raise KeyError(f"no features for record {exc.args[0]!r}") from None

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, ids=np.array(self.ids, dtype=str), matrix=self.matrix)

    @classmethod
    def load(cls, path: str | Path) -> FeatureStore:
        with np.load(path, allow_pickle=False) as z:
            return cls(tuple(str(s) for s in z["ids"]), z["matrix"])


def targets_for(manifest: DatasetManifest, table: ScoreTokenTable) -> np.ndarray:
    return np.array([encode_score(r.normalized, table) for r in manifest.records], dtype=np.int64)


def train_on_manifest(
    manifest: DatasetManifest,
    features: FeatureStore,
    table: ScoreTokenTable,
    config: TrainConfig,
    hidden: int = 16,
    init_mode: str = "warm",
    params: ScorerParams | None = None,
) -> TrainResult:
    X = features.rows_for(manifest)
    if params is None:
        params = init_params(X.shape[1], hidden, table.size, init_mode, config.seed)
    if params.K != table.size:
        raise ShapeMismatch(f"params have K={params.K} but codec has {table.size} tokens")
    return train(params, X, targets_for(manifest, table), config)


# ---------------------------------------------------------------------------
# persistence


def dumps_params(params: ScorerParams) -> bytes:
    header = _HEADER.pack(_MAGIC, _VERSION, params.D, params.H, params.K, INIT_MODES.index(params.init_mode))
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    return header + payload


def loads_params(data: bytes) -> ScorerParams:
    if len(data) < _HEADER.size:
        raise ParseError("parameter file truncated inside header")
    magic, version, D, H, K, mode = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ParseError("not a scorer parameter file (bad magic)")
    if version != _VERSION:
        raise ParseError(f"unsupported parameter file version {version}")
    if mode >= len(INIT_MODES):
        raise ParseError(f"bad init mode byte {mode}")
    sizes = (K * H, D * H, H)
    expected = _HEADER.size + 8 * sum(sizes)
    if len(data) != expected:
        raise ParseError(f"parameter payload is {len(data)} bytes, expected {expected}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    E = flat[: sizes[0]].reshape(K, H)
    W = flat[sizes[0]: sizes[0] + sizes[1]].reshape(D, H)
    b = flat[sizes[0] + sizes[1]:]
    return ScorerParams(E.copy(), W.copy(), b.copy(), INIT_MODES[mode])


def save_params(params: ScorerParams, path: str | Path) -> None:
    Path(path).write_bytes(dumps_params(params))


def load_params(path: str | Path) -> ScorerParams:
    return loads_params(Path(path).read_bytes())
