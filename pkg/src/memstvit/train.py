"""Cross-entropy training of the map classifier with Adam, plus a
finite-difference oracle for the hand-written gradients."""
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .patchseq import maps_to_patch_array
from .vit import ViTParams, dropout_mask, forward, forward_backward, init_params

log = logging.getLogger(__name__)

# Softmax is blind to a per-query constant added to every score, so the key
# bias never receives gradient; finite differences there measure only rounding.
ZERO_GRAD_SUFFIXES = ("attn.bk",)


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int = 60
    batch_size: int = 32
    dropout_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InputError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be at least 1")
        if not 0 <= self.dropout_rate < 1:
            raise InputError("dropout_rate must be in [0, 1)")


def cross_entropy(logits, label):
    """-log softmax(logits)[label], via log-sum-exp."""
    z = np.asarray(logits, dtype=np.float64)
    zmax = z.max()
    return float(zmax + np.log(np.exp(z - zmax).sum()) - z[label])


def _stack(batch):
    maps = np.stack([np.asarray(getattr(m, "values", m), dtype=np.float64) for m, _ in batch])
    labels = np.array([int(y) for _, y in batch])
    return maps, labels


def backward(batch, params, dropout_seed=None, dropout_rate=None):
    """Mean loss and gradients over ``batch`` of (map, label) pairs.

    Dropout hits the descriptor only, with a mask drawn from ``dropout_seed``;
    ``dropout_seed=None`` runs the network in eval mode.
    """
    if not batch:
        raise InputError("empty batch")
    maps, labels = _stack(batch)
    return _batch_grad(maps, labels, params, dropout_seed, dropout_rate)


def _batch_grad(maps, labels, params, dropout_seed, dropout_rate=None):
    rate = params.config.dropout_rate if dropout_rate is None else dropout_rate
    mask = None
    if dropout_seed is not None and rate > 0:
        mask = dropout_mask((len(labels), params.config.hidden_dim), rate, dropout_seed)
    loss, grads, _ = forward_backward(maps_to_patch_array(maps), labels, params, mask)
    return loss, grads


def _eval_loss(patches, label, params):
    return forward_backward(patches, [label], params)[0]


def finite_diff_check(params, sample, eps=1e-3, trials=200, seed=0, grads=None, return_details=False):
    """Max relative error between ``grads`` (default: backprop) and central differences.

    Uses the fourth-order central stencil
    (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h, whose truncation error is
    small enough at h=1e-3 that float64 rounding in the loss stays below the
    tolerance even for gradients near 1e-8.  Every tensor gets at least one
    probe before the remaining probes are spread at random.  Relative error
    uses max(|a|, |b|, 1e-8) as the denominator.
    """
    m, label = sample
    patches = maps_to_patch_array(np.asarray(getattr(m, "values", m), dtype=np.float64)[None])
    if grads is None:
        _, grads, _ = forward_backward(patches, [label], params)
    names = [n for n in params if not n.endswith(ZERO_GRAD_SUFFIXES)]
    rng = np.random.default_rng(seed)
    probe = params.copy()
    details = []
    for k in range(trials):
        name = names[k] if k < len(names) else names[rng.integers(len(names))]
        idx = tuple(int(rng.integers(s)) for s in probe[name].shape)
        orig = probe[name][idx]
        f = {}
        for step in (-2, -1, 1, 2):
            probe[name][idx] = orig + step * eps
            f[step] = _eval_loss(patches, label, probe)
        probe[name][idx] = orig
        numeric = (f[-2] - f[2] + 8.0 * (f[1] - f[-1])) / (12.0 * eps)
        analytic = float(grads[name][idx])
        err = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8)
        details.append((name, idx, numeric, analytic, err))
    worst = max(d[-1] for d in details)
    return (worst, details) if return_details else worst


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, params):
        return cls(0, params.zeros_like(), params.zeros_like())


def adam_step(params, grads, state, config):
    """One bias-corrected Adam update; returns new params and state."""
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    lr, eps = config.learning_rate, config.epsilon
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return ViTParams(params.config, new_p), AdamState(t, new_m, new_v)


def predict_proba(maps, params, batch_size=64):
    maps = np.asarray(maps, dtype=np.float64)
    out = [forward(maps[i:i + batch_size], params) for i in range(0, len(maps), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, 2))


def evaluate(maps, labels, params, batch_size=64):
    """Accuracy (argmax, ties to real) and mean loss."""
    probs = predict_proba(maps, params, batch_size)
    labels = np.asarray(labels)
    pred = (probs[:, 1] > probs[:, 0]).astype(int)
    p_true = np.clip(probs[np.arange(len(labels)), labels], 1e-300, None)
    return float(np.mean(pred == labels)), float(np.mean(-np.log(p_true)))


@dataclass
class TrainResult:
    params: ViTParams
    final_params: ViTParams
    history: list
    best_epoch: int


def train_loop(train, val, vit_config, config, init=None, log_path=None, on_epoch=None):
    """Seeded mini-batch training; keeps the best-validation-accuracy parameters.

    ``train`` and ``val`` are (maps, labels) with maps shaped (N, 60, 196, 3).
    One JSON metrics object per epoch goes to ``log_path`` if given.
    """
    xtr, ytr = np.asarray(train[0], dtype=np.float64), np.asarray(train[1], dtype=np.int64)
    xva, yva = np.asarray(val[0], dtype=np.float64), np.asarray(val[1], dtype=np.int64)
    if len(xtr) == 0:
        raise InputError("empty training split")
    if len(xva) == 0:
        raise InputError("empty validation split")
    rng = np.random.default_rng(config.seed)
    params = init if init is not None else init_params(vit_config, seed=int(rng.integers(2**31)))
    state = AdamState.zeros(params)
    history = []
    best, best_acc, best_epoch = params, -1.0, 0
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(xtr))
            losses = []
            for s in range(0, len(order), config.batch_size):
                idx = order[s:s + config.batch_size]
                seed = int(rng.integers(2**63))
                loss, grads = _batch_grad(xtr[idx], ytr[idx], params, seed, config.dropout_rate)
                if not np.isfinite(loss):
                    raise NumericalError(f"non-finite loss at epoch {epoch}, step {s // config.batch_size}")
                losses.append(loss * len(idx))
                params, state = adam_step(params, grads, state, config)
            val_acc, val_loss = evaluate(xva, yva, params)
            rec = {"epoch": epoch, "train_loss": float(np.sum(losses) / len(xtr)),
                   "val_loss": val_loss, "val_acc": val_acc}
            history.append(rec)
            log.info("epoch %d: train_loss %.5f val_loss %.5f val_acc %.4f", epoch, rec["train_loss"],
                     val_loss, val_acc)
            if fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
            if val_acc > best_acc:
                best, best_acc, best_epoch = params, val_acc, epoch
            if on_epoch is not None and on_epoch(rec) is False:
                break
    finally:
        if fh:
            fh.close()
    return TrainResult(best, params, history, best_epoch)


def config_from_dict(d):
    return TrainConfig(**{k: v for k, v in d.items() if k in TrainConfig.__dataclass_fields__})


def config_to_dict(cfg):
    return asdict(cfg)
