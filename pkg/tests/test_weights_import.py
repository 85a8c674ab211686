import numpy as np
import pytest

from memstvit.errors import ConfigMismatchError
from memstvit.vit import ViTConfig, forward, init_params, load_weights
from memstvit.weights_import import import_npz, import_tensors, infer_config

CFG = ViTConfig(hidden_dim=64, num_layers=2, num_heads=1, mlp_dim=128)


def _export(params, head_classes=2):
    """Lay our tensors out under the external names (the inverse mapping)."""
    d = params.config.hidden_dim
    src = {
        "patch_embed.proj.weight": params["patch_proj.w"].reshape(16, 16, 3, d).transpose(3, 2, 0, 1),
        "patch_embed.proj.bias": params["patch_proj.b"],
        "cls_token": params["cls_token"].reshape(1, 1, d),
        "pos_embed": params["pos_embed"][None],
        "norm.weight": params["ln_f.g"], "norm.bias": params["ln_f.b"],
    }
    for i in range(params.config.num_layers):
        s, p = f"blocks.{i}.", f"layers.{i}."
        src[s + "norm1.weight"], src[s + "norm1.bias"] = params[p + "ln1.g"], params[p + "ln1.b"]
        src[s + "attn.qkv.weight"] = np.concatenate([params[p + f"attn.w{c}"].T for c in "qkv"])
        src[s + "attn.qkv.bias"] = np.concatenate([params[p + f"attn.b{c}"] for c in "qkv"])
        src[s + "attn.proj.weight"], src[s + "attn.proj.bias"] = params[p + "attn.wo"].T, params[p + "attn.bo"]
        src[s + "norm2.weight"], src[s + "norm2.bias"] = params[p + "ln2.g"], params[p + "ln2.b"]
        src[s + "mlp.fc1.weight"], src[s + "mlp.fc1.bias"] = params[p + "mlp.w1"].T, params[p + "mlp.b1"]
        src[s + "mlp.fc2.weight"], src[s + "mlp.fc2.bias"] = params[p + "mlp.w2"].T, params[p + "mlp.b2"]
    if head_classes == 2:
        src["head.weight"], src["head.bias"] = params["head.w"].T, params["head.b"]
    else:
        src["head.weight"] = np.zeros((head_classes, d))
        src["head.bias"] = np.zeros(head_classes)
    return src


def _randomized(seed=0):
    p = init_params(CFG, seed=seed)
    rng = np.random.default_rng(seed)
    for k in p:
        p[k] = p[k] + rng.normal(0, 0.01, p[k].shape)
    return p


def test_roundtrip_through_external_names():
    p = _randomized()
    q = import_tensors(_export(p), CFG)
    for k in p:
        np.testing.assert_array_equal(q[k], p[k])


def test_infer_config():
    cfg = infer_config(_export(_randomized()))
    assert (cfg.hidden_dim, cfg.num_layers, cfg.mlp_dim, cfg.num_heads) == (64, 2, 128, 1)


def test_foreign_head_replaced():
    p = _randomized()
    q = import_tensors(_export(p, head_classes=1000), CFG, seed=3)
    assert q["head.w"].shape == (64, 2)
    np.testing.assert_array_equal(q["head.w"], init_params(CFG, seed=3)["head.w"])


def test_dimension_mismatch_is_loud():
    src = _export(_randomized())
    with pytest.raises(ConfigMismatchError, match="patch_embed"):
        import_tensors(src, ViTConfig.base())


def test_missing_tensor():
    src = _export(_randomized())
    del src["blocks.1.mlp.fc2.bias"]
    with pytest.raises(ConfigMismatchError, match="fc2.bias"):
        import_tensors(src, CFG)


def test_npz_and_cli(tmp_path):
    from memstvit.cli import main

    p = _randomized(1)
    np.savez(tmp_path / "ext.npz", **_export(p))
    q = import_npz(tmp_path / "ext.npz")
    x = np.random.default_rng(0).random((60, 196, 3))
    np.testing.assert_allclose(forward(x, q), forward(x, p), atol=1e-12)
    assert main(["import-weights", "--npz", str(tmp_path / "ext.npz"), "--out", str(tmp_path / "w.vitw")]) == 0
    w = load_weights(tmp_path / "w.vitw")
    assert w.config.hidden_dim == 64
