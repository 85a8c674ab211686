"""Import externally exported ViT tensors (timm-style names, saved as .npz).

Name correspondence (``i`` = block index)::

    patch_embed.proj.weight  (D, 3, 16, 16)  -> patch_proj.w  (768, D)
    patch_embed.proj.bias    (D,)            -> patch_proj.b
    cls_token                (1, 1, D)       -> cls_token
    pos_embed                (1, 197, D)     -> pos_embed
    blocks.i.norm1.weight / .bias            -> layers.i.ln1.g / .b
    blocks.i.attn.qkv.weight (3D, D)         -> layers.i.attn.wq / wk / wv (transposed)
    blocks.i.attn.qkv.bias   (3D,)           -> layers.i.attn.bq / bk / bv
    blocks.i.attn.proj.weight / .bias        -> layers.i.attn.wo (transposed) / bo
    blocks.i.norm2.weight / .bias            -> layers.i.ln2.g / .b
    blocks.i.mlp.fc1.weight / .bias          -> layers.i.mlp.w1 (transposed) / b1
    blocks.i.mlp.fc2.weight / .bias          -> layers.i.mlp.w2 (transposed) / b2
    norm.weight / norm.bias                  -> ln_f.g / ln_f.b

Patch rows are flattened in (row, col, channel) order, matching the patch
layout.  The classification head is imported only when it already has two
classes; otherwise it is freshly initialized.
"""
import re

import numpy as np

from .errors import ConfigMismatchError
from .patchseq import PATCH_DIM, PATCH_SIDE
from .vit import ViTConfig, ViTParams, init_params


def _get(src, name, shape=None):
    if name not in src:
        raise ConfigMismatchError(f"exported weights lack {name!r}")
    arr = np.asarray(src[name], dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise ConfigMismatchError(f"{name}: shape {arr.shape}, expected {tuple(shape)}")
    return arr


def infer_config(src):
    w = np.asarray(src["patch_embed.proj.weight"])
    if w.shape[1:] != (3, PATCH_SIDE, PATCH_SIDE):
        raise ConfigMismatchError(f"patch embedding {w.shape} is not 16x16x3")
    d = w.shape[0]
    blocks = {int(m.group(1)) for k in src for m in [re.match(r"blocks\.(\d+)\.", k)] if m}
    n_layers = max(blocks) + 1 if blocks else 0
    mlp = np.asarray(src["blocks.0.mlp.fc1.weight"]).shape[0] if n_layers else 4 * d
    heads = max(1, d // 64)
    pos = np.asarray(src["pos_embed"])
    if pos.shape[-1] != d:
        raise ConfigMismatchError(f"pos_embed width {pos.shape[-1]} != hidden size {d}")
    if pos.reshape(-1, d).shape[0] != 197:
        raise ConfigMismatchError(f"pos_embed has {pos.reshape(-1, d).shape[0]} rows, expected 197")
    return ViTConfig(hidden_dim=d, num_layers=n_layers, num_heads=heads, mlp_dim=mlp)


def import_tensors(src, config=None, seed=0):
    """Build ViTParams from a name -> array mapping; dimension mismatches raise."""
    cfg = config or infer_config(src)
    d, f = cfg.hidden_dim, cfg.mlp_dim
    params = init_params(cfg, seed=seed)
    t = dict(params)
    conv = _get(src, "patch_embed.proj.weight", (d, 3, PATCH_SIDE, PATCH_SIDE))
    t["patch_proj.w"] = conv.transpose(2, 3, 1, 0).reshape(PATCH_DIM, d)
    t["patch_proj.b"] = _get(src, "patch_embed.proj.bias", (d,))
    t["cls_token"] = _get(src, "cls_token").reshape(-1)
    t["pos_embed"] = _get(src, "pos_embed").reshape(-1, d)
    for i in range(cfg.num_layers):
        s, p = f"blocks.{i}.", f"layers.{i}."
        t[p + "ln1.g"] = _get(src, s + "norm1.weight", (d,))
        t[p + "ln1.b"] = _get(src, s + "norm1.bias", (d,))
        qkv = _get(src, s + "attn.qkv.weight", (3 * d, d))
        qkv_b = _get(src, s + "attn.qkv.bias", (3 * d,))
        for j, name in enumerate("qkv"):
            t[p + f"attn.w{name}"] = qkv[j * d:(j + 1) * d].T
            t[p + f"attn.b{name}"] = qkv_b[j * d:(j + 1) * d]
        t[p + "attn.wo"] = _get(src, s + "attn.proj.weight", (d, d)).T
        t[p + "attn.bo"] = _get(src, s + "attn.proj.bias", (d,))
        t[p + "ln2.g"] = _get(src, s + "norm2.weight", (d,))
        t[p + "ln2.b"] = _get(src, s + "norm2.bias", (d,))
        t[p + "mlp.w1"] = _get(src, s + "mlp.fc1.weight", (f, d)).T
        t[p + "mlp.b1"] = _get(src, s + "mlp.fc1.bias", (f,))
        t[p + "mlp.w2"] = _get(src, s + "mlp.fc2.weight", (d, f)).T
        t[p + "mlp.b2"] = _get(src, s + "mlp.fc2.bias", (d,))
    t["ln_f.g"] = _get(src, "norm.weight", (d,))
    t["ln_f.b"] = _get(src, "norm.bias", (d,))
    if "head.weight" in src and np.shape(src["head.weight"]) == (cfg.num_classes, d):
        t["head.w"] = _get(src, "head.weight").T
        t["head.b"] = _get(src, "head.bias", (cfg.num_classes,))
    return ViTParams(cfg, {k: np.ascontiguousarray(v) for k, v in t.items()})


def import_npz(path, config=None, seed=0):
    with np.load(path) as src:
        return import_tensors(dict(src), config, seed)
