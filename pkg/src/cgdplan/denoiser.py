"""DDPM reverse process over the flattened action vector.

The action vector is ``[pos_ctrl (row-major); yaw_ctrl; t_f_normalized]``
where ``t_f_normalized = (t_f - mean) / std``. Noise predictors are any
object with ``predict(x, step, context) -> eps`` of the same length as
``x``.
"""
import struct
from dataclasses import dataclass
from threading import Lock
from typing import Protocol

import numpy as np

from .bspline import POS_DEGREE, YAW_DEGREE, TrajectorySpline

DEFAULT_STEPS = 5
DEFAULT_BETA = (1e-4, 0.3)


@dataclass(frozen=True)
class NoiseSchedule:
    """Tables indexed by denoising step ``t = 1..N`` (stored at ``t - 1``)."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64).reshape(-1)
        if beta.size == 0 or np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("beta values must lie in (0, 1)")
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)

    @classmethod
    def linear(cls, n_steps=DEFAULT_STEPS, beta_start=DEFAULT_BETA[0], beta_end=DEFAULT_BETA[1]):
        return cls(np.linspace(beta_start, beta_end, n_steps))

    @property
    def n_steps(self):
        return self.beta.size

    @property
    def alpha(self):
        return 1.0 - self.beta

    @property
    def alpha_bar(self):
        return np.cumprod(self.alpha)

    @property
    def sigma(self):
        return np.sqrt(self.beta)

    def at(self, t):
        """(beta_t, alpha_t, alpha_bar_t, sigma_t) for step ``t`` in 1..N."""
        if not 1 <= t <= self.n_steps:
            raise IndexError(f"step {t} outside 1..{self.n_steps}")
        i = t - 1
        return self.beta[i], self.alpha[i], self.alpha_bar[i], self.sigma[i]


@dataclass(frozen=True)
class ActionLayout:
    """Packing of a :class:`TrajectorySpline` into the action vector."""

    n_pos: int
    n_yaw: int
    tf_mean: float = 3.0
    tf_std: float = 1.0
    pos_degree: int = POS_DEGREE
    yaw_degree: int = YAW_DEGREE

    def __post_init__(self):
        if self.tf_std <= 0:
            raise ValueError("tf_std must be positive")

    @classmethod
    def for_scenario(cls, scenario, n_pos, n_yaw):
        return cls(n_pos, n_yaw, scenario.tf_stats.mean, scenario.tf_stats.std)

    @property
    def dim(self):
        return 3 * self.n_pos + self.n_yaw + 1

    @property
    def n_ctrl_entries(self):
        """Length of the control-point part (the QP decision vector)."""
        return 3 * self.n_pos + self.n_yaw

    def pos(self, flat):
        return np.asarray(flat)[:3 * self.n_pos].reshape(self.n_pos, 3)

    def yaw(self, flat):
        return np.asarray(flat)[3 * self.n_pos:self.n_ctrl_entries]

    def t_f(self, flat):
        return self.tf_mean + self.tf_std * float(np.asarray(flat)[-1])

    def normalize_tf(self, t_f):
        return (t_f - self.tf_mean) / self.tf_std

    def encode(self, spline):
        if spline.n_pos != self.n_pos or spline.n_yaw != self.n_yaw:
            raise ValueError(f"spline has {spline.n_pos}/{spline.n_yaw} control points, "
                             f"layout expects {self.n_pos}/{self.n_yaw}")
        return np.concatenate([spline.pos_ctrl.reshape(-1), spline.yaw_ctrl,
                               [self.normalize_tf(spline.t_f)]])

    def decode(self, flat, tf_min=None, tf_max=None):
        t_f = self.t_f(flat)
        if tf_min is not None or tf_max is not None:
            t_f = float(np.clip(t_f, tf_min if tf_min is not None else -np.inf,
                                tf_max if tf_max is not None else np.inf))
        return TrajectorySpline(self.pos(flat).copy(), self.yaw(flat).copy(), t_f,
                                self.pos_degree, self.yaw_degree)


@dataclass(frozen=True)
class DenoiseState:
    flat: np.ndarray
    step: int

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64).reshape(-1)
        flat.flags.writeable = False
        object.__setattr__(self, "flat", flat)
        if self.step < 0:
            raise ValueError("step must be >= 0")

    def with_flat(self, flat):
        return DenoiseState(flat, self.step)


class NoisePredictor(Protocol):
    def predict(self, x, step, context=None): ...


def _as_rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.Generator(np.random.PCG64(rng))


def sample_initial(dim, rng, n_steps=DEFAULT_STEPS):
    """White-noise start ``x^N``; ``rng`` is a Generator or a seed."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    return DenoiseState(_as_rng(rng).standard_normal(dim), n_steps)


def reverse_step(state, predictor, schedule, rng, context=None, noise_scale=1.0):
    """One ancestral DDPM step ``x_t -> x_{t-1}``.

    ``x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_t) + sigma_t z``
    with ``z = 0`` on the final step. ``noise_scale = 0`` disables the noise.
    """
    t = state.step
    if t < 1:
        raise ValueError("state is already fully denoised (step 0)")
    beta, alpha, alpha_bar, sigma = schedule.at(t)
    x = state.flat
    eps = np.asarray(predictor.predict(x, t, context), dtype=np.float64)
    if eps.shape != x.shape:
        raise ValueError(f"predictor returned shape {eps.shape}, expected {x.shape}")
    mean = (x - beta / np.sqrt(1.0 - alpha_bar) * eps) / np.sqrt(alpha)
    if t > 1 and noise_scale:
        mean = mean + noise_scale * sigma * _as_rng(rng).standard_normal(x.shape)
    return DenoiseState(mean, t - 1)


class SurrogatePredictor:
    """Noise predictor that is exact for data concentrated on nominal vectors.

    ``interpolate`` targets the first nominal; ``multimodal`` targets
    whichever nominal ``x`` is closest to under the forward-process scaling.
    Nominals are either fixed vectors or produced per context by
    ``source(context)``.
    """

    KINDS = ("interpolate", "multimodal")

    def __init__(self, kind, schedule, nominals=None, source=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown surrogate kind {kind!r}; choose from {self.KINDS}")
        if (nominals is None) == (source is None):
            raise ValueError("give exactly one of nominals or source")
        if nominals is not None:
            nominals = [np.asarray(v, dtype=np.float64).reshape(-1) for v in nominals]
            if not nominals:
                raise ValueError("nominal set is empty")
        self.kind = kind
        self.schedule = schedule
        self._fixed = nominals
        self._source = source
        self._cache = {}
        self._lock = Lock()

    def nominals(self, context=None):
        if self._fixed is not None:
            return self._fixed
        key = context.key()
        with self._lock:
            if key not in self._cache:
                vecs = [np.asarray(v, dtype=np.float64) for v in self._source(context)]
                if not vecs:
                    raise ValueError(f"no nominal trajectories for scenario {context.id!r}")
                self._cache[key] = vecs
            return self._cache[key]

    def select(self, x, step, context=None):
        """The nominal vector the prediction at ``(x, step)`` pulls toward."""
        noms = self.nominals(context)
        if self.kind == "interpolate" or len(noms) == 1:
            return noms[0]
        root_ab = np.sqrt(self.schedule.at(step)[2])
        dists = [float(np.sum((x - root_ab * v) ** 2)) for v in noms]
        return noms[int(np.argmin(dists))]

    def predict(self, x, step, context=None):
        x = np.asarray(x, dtype=np.float64)
        alpha_bar = self.schedule.at(step)[2]
        target = self.select(x, step, context)
        return (x - np.sqrt(alpha_bar) * target) / np.sqrt(1.0 - alpha_bar)


def surrogate_predictor(kind, nominals, schedule, layout):
    """Surrogate built from a fixed, nonempty set of nominal splines."""
    nominals = list(nominals)
    if not nominals:
        raise ValueError("nominal set is empty")
    return SurrogatePredictor(kind, schedule, nominals=[layout.encode(s) for s in nominals])


# ---------------------------------------------------------------------------
# Flat-file feed-forward predictor

MAGIC = b"CGDW1"
ACTIVATIONS = {0: "identity", 1: "relu", 2: "tanh", 3: "silu"}
_ACT_FUNCS = {
    "identity": lambda z: z,
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "silu": lambda z: z / (1.0 + np.exp(-z)),
}
STEP_FEATURES = 1
CONTEXT_FEATURES = 10


class WeightFileError(ValueError):
    pass


def context_features(context):
    """``[start(3), goal(3), first obstacle center(3), first obstacle radius]``."""
    feats = np.zeros(CONTEXT_FEATURES)
    if context is None:
        return feats
    feats[0:3] = context.start_pos
    feats[3:6] = context.goal
    if context.obstacles:
        feats[6:9] = context.obstacles[0].center
        feats[9] = context.obstacles[0].radius
    return feats


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray     # (rows, cols) float32
    bias: np.ndarray       # (rows,) float32
    activation: str = "identity"

    def __post_init__(self):
        w = np.ascontiguousarray(self.weight, dtype=np.float32)
        b = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)
        if w.ndim != 2 or b.shape[0] != w.shape[0]:
            raise WeightFileError(f"bias length {b.shape[0]} does not match weight rows {w.shape}")
        if self.activation not in _ACT_FUNCS:
            raise WeightFileError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)


class FeedForwardPredictor:
    """Small MLP on ``[x; step; context features]`` returning a noise estimate."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise WeightFileError("network has no layers")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise WeightFileError(
                    f"dimension mismatch: layer outputs {prev.weight.shape[0]} "
                    f"but next layer expects {nxt.weight.shape[1]}")
        self.layers = layers
        self.in_dim = layers[0].weight.shape[1]
        self.out_dim = layers[-1].weight.shape[0]
        if self.out_dim != self.in_dim - STEP_FEATURES - CONTEXT_FEATURES:
            raise WeightFileError(
                f"dimension mismatch: input {self.in_dim} implies action dim "
                f"{self.in_dim - STEP_FEATURES - CONTEXT_FEATURES}, output is {self.out_dim}")

    @property
    def action_dim(self):
        return self.out_dim

    def predict(self, x, step, context=None):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.out_dim:
            raise ValueError(f"input has length {x.shape[0]}, network expects {self.out_dim}")
        h = np.concatenate([x, [float(step)], context_features(context)])
        for layer in self.layers:
            h = _ACT_FUNCS[layer.activation](layer.weight.astype(np.float64) @ h
                                              + layer.bias.astype(np.float64))
        return h


def save_weights(path, layers):
    tags = {name: tag for tag, name in ACTIVATIONS.items()}
    layers = list(layers)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(layers)))
        for layer in layers:
            rows, cols = layer.weight.shape
            fh.write(struct.pack("<III", rows, cols, tags[layer.activation]))
        for layer in layers:
            fh.write(layer.weight.astype("<f4").tobytes(order="C"))
            fh.write(layer.bias.astype("<f4").tobytes())


def load_weights(path, action_dim=None):
    """Read a ``CGDW1`` weight file into a :class:`FeedForwardPredictor`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(MAGIC)] != MAGIC:
        raise WeightFileError(f"{path}: bad magic header {data[:len(MAGIC)]!r}")
    pos = len(MAGIC)
    try:
        (n_layers,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shapes = []
        for _ in range(n_layers):
            rows, cols, tag = struct.unpack_from("<III", data, pos)
            pos += 12
            if tag not in ACTIVATIONS:
                raise WeightFileError(f"{path}: unknown activation tag {tag}")
            shapes.append((rows, cols, ACTIVATIONS[tag]))
    except struct.error as exc:
        raise WeightFileError(f"{path}: truncated header") from exc
    expected = pos + sum(4 * (r * c + r) for r, c, _ in shapes)
    if len(data) != expected:
        raise WeightFileError(f"{path}: dimension mismatch, header implies {expected} bytes, "
                              f"file has {len(data)}")
    layers = []
    for rows, cols, act in shapes:
        w = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=pos).reshape(rows, cols)
        pos += 4 * rows * cols
        b = np.frombuffer(data, dtype="<f4", count=rows, offset=pos)
        pos += 4 * rows
        layers.append(Layer(w.astype(np.float32), b.astype(np.float32), act))
    net = FeedForwardPredictor(layers)
    if action_dim is not None and net.action_dim != action_dim:
        raise WeightFileError(f"{path}: dimension mismatch, network action dim {net.action_dim}, "
                              f"planner expects {action_dim}")
    return net
