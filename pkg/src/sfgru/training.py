"""ADAM with L2 weight decay, the minibatch training loop and evaluation."""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .architectures import backward, forward_batch, init_model
from .dataset import SamplingSpec, balance_subsample, sample_window
from .errors import InsufficientHistory, NumericalError, ShapeError
from .features import stack_windows
from .metrics import classification_report
from .numerics import derive_seed, make_rng
from .recurrent import bce_loss

log = logging.getLogger(__name__)

_warned = set()

PAPER_LR = 5e-6
SYNTH_LR = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    lr: float = PAPER_LR
    epochs: int = 60
    batch_size: int = 32
    l2: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    flip_augment: bool = True
    balance: bool = True

    def __post_init__(self):
        if self.lr < 0 or self.l2 < 0 or self.eps_adam <= 0:
            raise ValueError("lr and l2 must be >= 0 and eps_adam > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")

    @classmethod
    def for_mode(cls, mode="paper", **overrides):
        lr = SYNTH_LR if mode == "synth" else PAPER_LR
        return cls(**{"lr": lr, **overrides})

    def to_dict(self):
        return asdict(self)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def is_bias(name):
    return name.rsplit(".", 1)[-1] in ("b", "br", "bz", "bh")


def adam_step(params, grads, state, cfg):
    """One ADAM update in place. L2 is added to weight gradients only."""
    named = params.named_arrays()
    gnamed = grads.named_arrays()
    if set(named) != set(gnamed):
        raise ShapeError("gradients", sorted(named), sorted(gnamed))
    for name, g in gnamed.items():
        if g.shape != named[name].shape:
            raise ShapeError(f"gradient {name}", named[name].shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, w in named.items():
        g = gnamed[name]
        if cfg.l2 and not is_bias(name):
            g = g + cfg.l2 * w
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps_adam)
    return params, state


@dataclass
class TrainResult:
    params: object
    loss_curve: list
    samples_per_epoch: list
    n_train_windows: int


@dataclass
class PreparedSet:
    """Windows stacked into model inputs, with optional mirrored copies."""

    inputs: dict
    labels: np.ndarray
    track_ids: list
    flipped_inputs: dict = None
    context_flipped: bool = True

    def __len__(self):
        return len(self.labels)


def collect_samples(tracks, sampling, flip=False, require=()):
    """One window per track; tracks without enough history are skipped."""
    samples = []
    for t in tracks:
        try:
            samples.append(sample_window(t, sampling, flip=flip, require=require))
        except InsufficientHistory:
            continue
    return samples


def prepare(spec, tracks, sampling, with_flips=False):
    keys = spec.fusion_order
    samples = collect_samples(tracks, sampling, require=keys)
    prepared = PreparedSet(
        inputs=stack_windows([s.window for s in samples], keys) if samples else {},
        labels=np.array([s.label for s in samples], dtype=np.float64),
        track_ids=[s.track_id for s in samples],
    )
    if with_flips and samples:
        flipped = collect_samples(tracks, sampling, flip=True, require=keys)
        prepared.flipped_inputs = stack_windows([s.window for s in flipped], keys)
        prepared.context_flipped = all(s.window.context_flipped for s in flipped)
    return prepared


def _gather(inputs, idx):
    return {k: v[idx] for k, v in inputs.items()}


def _epoch_plan(data, cfg, epoch):
    """(sample index, use flipped copy) pairs for one epoch, in training order."""
    idx = list(range(len(data)))
    if cfg.balance:
        idx = balance_subsample(idx, derive_seed(cfg.seed, 1, epoch),
                                label=lambda i: int(data.labels[i]))
    plan = [(i, False) for i in idx]
    if cfg.flip_augment and data.flipped_inputs is not None:
        plan += [(i, True) for i in idx]
    order = make_rng(derive_seed(cfg.seed, 2, epoch)).permutation(len(plan))
    return [plan[k] for k in order]


def train_prepared(spec, data, cfg, params=None):
    if len(data) == 0:
        raise ValueError("training set is empty")
    if params is None:
        params = init_model(spec, make_rng(derive_seed(cfg.seed, 0)))
    if cfg.flip_augment and data.flipped_inputs is not None and not data.context_flipped:
        if "flip" not in _warned:
            _warned.add("flip")
            log.warning("no mirrored context vectors; flip augmentation reuses unflipped context")
    state = AdamState()
    curve = []
    counts = []
    for epoch in range(cfg.epochs):
        plan = _epoch_plan(data, cfg, epoch)
        losses = []
        for b, lo in enumerate(range(0, len(plan), cfg.batch_size)):
            chunk = plan[lo:lo + cfg.batch_size]
            plain = np.array([i for i, f in chunk if not f], dtype=int)
            flip = np.array([i for i, f in chunk if f], dtype=int)
            parts = []
            if len(plain):
                parts.append(_gather(data.inputs, plain))
            if len(flip):
                parts.append(_gather(data.flipped_inputs, flip))
            inputs = {k: np.concatenate([p[k] for p in parts]) for k in spec.fusion_order}
            labels = data.labels[np.concatenate([plain, flip])]
            probs, cache = forward_batch(spec, params, inputs)
            per_sample = bce_loss(probs, labels)
            batch_loss = float(np.mean(per_sample))
            if not math.isfinite(batch_loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}, lr {cfg.lr}")
            grads = backward(spec, params, cache, labels, scale=1.0 / len(labels))
            adam_step(params, grads, state, cfg)
            losses.extend(per_sample.tolist())
        # exact summation keeps the epoch loss independent of batch order
        curve.append(math.fsum(losses) / len(plan))
        counts.append(len(plan))
    return TrainResult(params, curve, counts, len(data))


def train(spec, tracks, cfg, sampling=None):
    """Sample one window per training track and fit a fresh model."""
    sampling = sampling or SamplingSpec(spec.obs_len, 60)
    data = prepare(spec, tracks, sampling, with_flips=cfg.flip_augment)
    return train_prepared(spec, data, cfg)


def predict_proba(spec, params, inputs, batch_size=256):
    n = len(next(iter(inputs.values())))
    out = []
    for lo in range(0, n, batch_size):
        probs, _ = forward_batch(spec, params, {k: v[lo:lo + batch_size] for k, v in inputs.items()})
        out.append(probs)
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(spec, params, inputs, labels, threshold=0.5):
    """Metrics at a hard threshold plus threshold-free AUC. ``auc`` is None for one-class sets."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("evaluation set is empty")
    probs = predict_proba(spec, params, inputs)
    preds = (probs >= threshold).astype(int)
    return classification_report(preds, labels.astype(int), scores=probs)
