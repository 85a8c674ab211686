"""A compact pre-norm vision transformer over map patches, in numpy.

Forward and reverse-mode passes are written out by hand and run in float64 by
default.  Tokens 1..P are processed in a canonical (lexicographic) order, which
the transformer is equivariant to; this makes every sum over the key axis run
in an order that does not depend on how the patches were presented, so joint
permutations of patches and positions give bit-identical outputs.
"""
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import ConfigMismatchError, InputError, NumericalError
from .patchseq import N_PATCHES, PATCH_DIM, maps_to_patch_array

LN_EPS = 1e-12
INIT_STD = 0.02
VITW_MAGIC = b"VITW"
VITW_VERSION = 1
_CONFIG_FIELDS = ("hidden_dim", "num_layers", "num_heads", "mlp_dim", "num_patches", "patch_dim", "num_classes")


@dataclass(frozen=True)
class ViTConfig:
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    mlp_dim: int = 128
    num_patches: int = N_PATCHES
    patch_dim: int = PATCH_DIM
    num_classes: int = 2
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.hidden_dim % self.num_heads:
            raise ConfigMismatchError(f"hidden_dim {self.hidden_dim} not divisible by {self.num_heads} heads")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigMismatchError("dropout_rate must be in [0, 1)")

    @classmethod
    def toy(cls, **kw):
        return cls(**{"hidden_dim": 64, "num_layers": 2, "num_heads": 4, "mlp_dim": 128, **kw})

    @classmethod
    def base(cls, **kw):
        return cls(**{"hidden_dim": 768, "num_layers": 12, "num_heads": 12, "mlp_dim": 3072, **kw})

    @property
    def head_dim(self):
        return self.hidden_dim // self.num_heads

    def shapes(self):
        """Name -> shape of every learnable tensor, in file order."""
        d, f = self.hidden_dim, self.mlp_dim
        out = {
            "patch_proj.w": (self.patch_dim, d),
            "patch_proj.b": (d,),
            "cls_token": (d,),
            "pos_embed": (self.num_patches + 1, d),
        }
        for i in range(self.num_layers):
            p = f"layers.{i}."
            out.update({
                p + "ln1.g": (d,), p + "ln1.b": (d,),
                p + "attn.wq": (d, d), p + "attn.bq": (d,),
                p + "attn.wk": (d, d), p + "attn.bk": (d,),
                p + "attn.wv": (d, d), p + "attn.bv": (d,),
                p + "attn.wo": (d, d), p + "attn.bo": (d,),
                p + "ln2.g": (d,), p + "ln2.b": (d,),
                p + "mlp.w1": (d, f), p + "mlp.b1": (f,),
                p + "mlp.w2": (f, d), p + "mlp.b2": (d,),
            })
        out.update({"ln_f.g": (d,), "ln_f.b": (d,), "head.w": (d, self.num_classes), "head.b": (self.num_classes,)})
        return out


class ViTParams(dict):
    """Name -> ndarray mapping tied to a ViTConfig."""

    def __init__(self, config, tensors):
        super().__init__(tensors)
        self.config = config
        shapes = config.shapes()
        if set(shapes) != set(self):
            missing = set(shapes) - set(self)
            extra = set(self) - set(shapes)
            raise ConfigMismatchError(f"parameter names differ from config: missing {sorted(missing)[:3]}, "
                                      f"unexpected {sorted(extra)[:3]}")
        for name, shape in shapes.items():
            if self[name].shape != shape:
                raise ConfigMismatchError(f"{name}: shape {self[name].shape} != {shape}")

    def copy(self):
        return ViTParams(self.config, {k: v.copy() for k, v in self.items()})

    def zeros_like(self):
        return {k: np.zeros_like(v) for k, v in self.items()}

    def astype(self, dtype):
        return ViTParams(self.config, {k: v.astype(dtype) for k, v in self.items()})


def _trunc_normal(rng, shape, std):
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2
    return x * std


def init_params(config, seed=0, std=INIT_STD):
    """Truncated-normal weights and class token; zero biases and positions; unit LN gains.

    The class token is random rather than zero: a zero token 0 would sit on
    the LayerNorm singularity (zero variance) at the first step.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in config.shapes().items():
        leaf = name.rsplit(".", 1)[-1]
        if name.endswith(("ln1.g", "ln2.g")) or name == "ln_f.g":
            tensors[name] = np.ones(shape)
        elif leaf in ("w", "w1", "w2", "wq", "wk", "wv", "wo") or name == "cls_token":
            tensors[name] = _trunc_normal(rng, shape, std)
        else:
            tensors[name] = np.zeros(shape)
    return ViTParams(config, tensors)


# ---------------------------------------------------------------- primitives


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def gelu(u):
    return 0.5 * u * (1.0 + erf(u / np.sqrt(2.0)))


def _gelu_grad(u):
    return 0.5 * (1.0 + erf(u / np.sqrt(2.0))) + u * np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)


def layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _layer_norm_back(dy, g, cache):
    xhat, rstd = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxh = dy * g
    dx = rstd * (dxh - dxh.mean(axis=-1, keepdims=True) - xhat * (dxh * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _as_patch_batch(seq):
    """Accept a PatchSequence, (P,16,16,3), (P,768) or a batch of those."""
    x = getattr(seq, "patches", seq)
    x = np.asarray(x)
    if x.ndim in (2, 4):
        x = x[None]
    return x.reshape(x.shape[0], x.shape[1], -1)


# ---------------------------------------------------------------- forward


def embed(seq, params):
    """Tokens (B, P+1, D): class token then projected patches, plus positions."""
    patches = _as_patch_batch(seq).astype(params["patch_proj.w"].dtype, copy=False)
    cfg = params.config
    if patches.shape[1:] != (cfg.num_patches, cfg.patch_dim):
        raise ConfigMismatchError(f"patch batch {patches.shape[1:]} does not fit "
                                  f"({cfg.num_patches}, {cfg.patch_dim})")
    b = patches.shape[0]
    proj = patches @ params["patch_proj.w"] + params["patch_proj.b"]
    cls = np.broadcast_to(params["cls_token"], (b, 1, cfg.hidden_dim))
    return np.concatenate([cls, proj], axis=1) + params["pos_embed"]


def canonical_order(tokens):
    """Per-sample token order: class token first, the rest sorted lexicographically."""
    b, t, _ = tokens.shape
    order = np.empty((b, t), dtype=np.int64)
    order[:, 0] = 0
    for i in range(b):
        rest = tokens[i, 1:]
        order[i, 1:] = 1 + np.lexsort(rest.T[::-1])
    return order


def _gather_tokens(x, order):
    return np.take_along_axis(x, order[:, :, None], axis=1)


def _run_layers(x, params, keep_cache=False, attention_out=None):
    cfg = params.config
    b, t, d = x.shape
    nh, dh = cfg.num_heads, cfg.head_dim
    scale = 1.0 / np.sqrt(dh)
    caches = []
    for i in range(cfg.num_layers):
        p = f"layers.{i}."
        h, ln1 = layer_norm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = (h @ params[p + "attn.wq"] + params[p + "attn.bq"]).reshape(b, t, nh, dh).transpose(0, 2, 1, 3)
        k = (h @ params[p + "attn.wk"] + params[p + "attn.bk"]).reshape(b, t, nh, dh).transpose(0, 2, 1, 3)
        v = (h @ params[p + "attn.wv"] + params[p + "attn.bv"]).reshape(b, t, nh, dh).transpose(0, 2, 1, 3)
        a = softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
        o = (a @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
        x1 = x + o @ params[p + "attn.wo"] + params[p + "attn.bo"]
        h2, ln2 = layer_norm(x1, params[p + "ln2.g"], params[p + "ln2.b"])
        u = h2 @ params[p + "mlp.w1"] + params[p + "mlp.b1"]
        gu = gelu(u)
        x2 = x1 + gu @ params[p + "mlp.w2"] + params[p + "mlp.b2"]
        if not np.all(np.isfinite(x2)):
            raise NumericalError(f"non-finite activations in encoder layer {i}", layer=i)
        if attention_out is not None:
            attention_out.append(a)
        if keep_cache:
            caches.append(dict(h=h, ln1=ln1, q=q, k=k, v=v, a=a, o=o, h2=h2, ln2=ln2, u=u, gu=gu))
        x = x2
    return x, caches


def dropout_mask(shape, rate, seed):
    """Inverted-dropout multiplier: 0 or 1/(1-rate)."""
    if rate == 0:
        return np.ones(shape)
    rng = np.random.default_rng(seed)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def encoder_forward(tokens, params, train_mode=False, seed=None, attention_out=None):
    """Descriptor: the class-token row after the final LayerNorm.

    In train mode the descriptor goes through dropout (rate from the config,
    mask drawn from ``seed``); in eval mode it is returned unchanged.
    """
    tokens = np.asarray(tokens)
    single = tokens.ndim == 2
    if single:
        tokens = tokens[None]
    if not np.all(np.isfinite(tokens)):
        raise NumericalError("non-finite input tokens", layer=-1)
    order = canonical_order(tokens)
    x, _ = _run_layers(_gather_tokens(tokens, order), params, attention_out=attention_out)
    desc, _ = layer_norm(x[:, 0], params["ln_f.g"], params["ln_f.b"])
    if train_mode:
        desc = desc * dropout_mask(desc.shape, params.config.dropout_rate, seed)
    return desc[0] if single else desc


def head_logits(desc, params):
    return desc @ params["head.w"] + params["head.b"]


def classify_head(desc, params):
    """Class probabilities (real, fake) from a descriptor."""
    return softmax(head_logits(desc, params))


def forward(maps, params, train_mode=False, seed=None):
    """Map (or (B, 60, 196, 3) batch) to class probabilities."""
    values = np.asarray(getattr(maps, "values", maps))
    single = values.ndim == 3
    patches = maps_to_patch_array(values[None] if single else values)
    desc = encoder_forward(embed(patches, params), params, train_mode, seed)
    probs = classify_head(desc, params)
    return probs[0] if single else probs


# ---------------------------------------------------------------- backward


def forward_backward(patches, labels, params, drop_mask=None):
    """Mean cross-entropy over the batch and its gradient for every tensor.

    ``patches`` is (B, P, 768); ``drop_mask`` multiplies the descriptor
    (None disables dropout).  Returns (loss, grads, probs).
    """
    cfg = params.config
    patches = _as_patch_batch(patches)
    labels = np.asarray(labels, dtype=np.int64)
    b = patches.shape[0]
    tokens = embed(patches, params)
    order = canonical_order(tokens)
    x0 = _gather_tokens(tokens, order)
    x, caches = _run_layers(x0, params, keep_cache=True)
    desc, lnf = layer_norm(x[:, 0], params["ln_f.g"], params["ln_f.b"])
    dropped = desc if drop_mask is None else desc * drop_mask
    logits = head_logits(dropped, params)
    zmax = logits.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(b), labels]))
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss")
    probs = np.exp(logits - lse[:, None])

    g = {}
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    g["head.w"] = dropped.T @ dlogits
    g["head.b"] = dlogits.sum(axis=0)
    ddesc = dlogits @ params["head.w"].T
    if drop_mask is not None:
        ddesc = ddesc * drop_mask
    dx0, g["ln_f.g"], g["ln_f.b"] = _layer_norm_back(ddesc, params["ln_f.g"], lnf)
    dx = np.zeros_like(x)
    dx[:, 0] = dx0

    d = cfg.hidden_dim
    nh, dh = cfg.num_heads, cfg.head_dim
    t = x.shape[1]
    scale = 1.0 / np.sqrt(dh)
    for i in reversed(range(cfg.num_layers)):
        p = f"layers.{i}."
        c = caches[i]
        # MLP branch
        dm = dx.reshape(-1, d)
        g[p + "mlp.w2"] = c["gu"].reshape(-1, cfg.mlp_dim).T @ dm
        g[p + "mlp.b2"] = dm.sum(axis=0)
        du = (dm @ params[p + "mlp.w2"].T) * _gelu_grad(c["u"].reshape(-1, cfg.mlp_dim))
        g[p + "mlp.w1"] = c["h2"].reshape(-1, d).T @ du
        g[p + "mlp.b1"] = du.sum(axis=0)
        dh2 = (du @ params[p + "mlp.w1"].T).reshape(b, t, d)
        dln, g[p + "ln2.g"], g[p + "ln2.b"] = _layer_norm_back(dh2, params[p + "ln2.g"], c["ln2"])
        dx = dx + dln
        # attention branch
        dao = dx.reshape(-1, d)
        g[p + "attn.wo"] = c["o"].reshape(-1, d).T @ dao
        g[p + "attn.bo"] = dao.sum(axis=0)
        do = (dao @ params[p + "attn.wo"].T).reshape(b, t, nh, dh).transpose(0, 2, 1, 3)
        a, q, k, v = c["a"], c["q"], c["k"], c["v"]
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        hflat = c["h"].reshape(-1, d)
        dh_total = np.zeros((b * t, d))
        for name, grad in (("q", dq), ("k", dk), ("v", dv)):
            gflat = grad.transpose(0, 2, 1, 3).reshape(-1, d)
            g[p + f"attn.w{name}"] = hflat.T @ gflat
            g[p + f"attn.b{name}"] = gflat.sum(axis=0)
            dh_total += gflat @ params[p + f"attn.w{name}"].T
        dln, g[p + "ln1.g"], g[p + "ln1.b"] = _layer_norm_back(dh_total.reshape(b, t, d), params[p + "ln1.g"],
                                                               c["ln1"])
        dx = dx + dln

    # undo the canonical ordering, then the embedding
    dtokens = np.empty_like(dx)
    np.put_along_axis(dtokens, order[:, :, None], dx, axis=1)
    g["pos_embed"] = dtokens.sum(axis=0)
    g["cls_token"] = dtokens[:, 0].sum(axis=0)
    dproj = dtokens[:, 1:].reshape(-1, d)
    g["patch_proj.w"] = patches.reshape(-1, cfg.patch_dim).T @ dproj
    g["patch_proj.b"] = dproj.sum(axis=0)
    for name, grad in g.items():
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient for {name}")
    return loss, g, probs


# ---------------------------------------------------------------- weights file


def save_weights(params, path):
    """VITW file: header, tensor manifest, then little-endian f32 payloads."""
    cfg = params.config
    names = list(cfg.shapes())
    manifest = bytearray()
    offset = 0
    for name in names:
        arr = params[name]
        enc = name.encode("utf-8")
        manifest += struct.pack("<I", len(enc)) + enc
        manifest += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        manifest += struct.pack("<Q", offset)
        offset += arr.size * 4
    with open(path, "wb") as fh:
        fh.write(VITW_MAGIC + struct.pack("<I", VITW_VERSION))
        fh.write(struct.pack(f"<{len(_CONFIG_FIELDS)}I", *(getattr(cfg, f) for f in _CONFIG_FIELDS)))
        fh.write(struct.pack("<f", cfg.dropout_rate))
        fh.write(struct.pack("<I", len(names)))
        fh.write(manifest)
        for name in names:
            fh.write(params[name].astype("<f4").tobytes())


def load_weights(path, expect=None):
    """Read a VITW file; ``expect`` (a ViTConfig) must agree on every dimension."""
    data = Path(path).read_bytes()
    if data[:4] != VITW_MAGIC:
        raise InputError(f"{path}: not a VITW weights file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VITW_VERSION:
        raise InputError(f"{path}: unsupported VITW version {version}")
    off = 8
    fields = struct.unpack_from(f"<{len(_CONFIG_FIELDS)}I", data, off)
    off += 4 * len(_CONFIG_FIELDS)
    (rate,) = struct.unpack_from("<f", data, off)
    off += 4
    cfg = ViTConfig(**dict(zip(_CONFIG_FIELDS, fields)), dropout_rate=round(float(rate), 6))
    if expect is not None:
        diff = {f: (getattr(cfg, f), getattr(expect, f)) for f in _CONFIG_FIELDS
                if getattr(cfg, f) != getattr(expect, f)}
        if diff:
            raise ConfigMismatchError(f"weights config mismatch (file, expected): {diff}")
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    entries = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + n].decode("utf-8")
        off += n
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        (pos,) = struct.unpack_from("<Q", data, off)
        off += 8
        entries.append((name, shape, pos))
    tensors = {}
    for name, shape, pos in entries:
        size = int(np.prod(shape, dtype=np.int64))
        start = off + pos
        if start + 4 * size > len(data):
            raise InputError(f"{path}: truncated payload for {name}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=size, offset=start).reshape(shape).astype(np.float64)
    return ViTParams(cfg, tensors)


def config_dict(cfg):
    return asdict(cfg)
