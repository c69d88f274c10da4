"""Forward kernels for visuo-tactile fusion (evaluation only, float64 numpy).

Parameters live in a flat ``{name: ndarray}`` dict so EMA and checkpoint
I/O treat every model part uniformly. Affine layers follow ``y = x @ W.T + b``.

Parameter names (``d`` = embedding dim, ``H`` = decoder hidden dim)::

    cnn.conv1.weight (16, 3, 3, 3)    cnn.conv1.bias (16,)
    cnn.conv2.weight (64, 16, 3, 3)   cnn.conv2.bias (64,)
    cnn.conv3.weight (256, 64, 3, 3)  cnn.conv3.bias (256,)
    cnn.proj.weight  (d, 3072)        cnn.proj.bias  (d,)
    fuse.r{1,2}.{q,k,v,o}.weight (d, d), .bias (d,)
    fuse.r{1,2}.norm.weight (d,)      fuse.r{1,2}.norm.bias (d,)
    dec.fc1.weight (H, 2d)            dec.fc1.bias (H,)
    dec.fc2.weight (768, H)           dec.fc2.bias (768,)
    meta.num_heads (1,)               meta.dropout (1,)

Round 1 lets the tactile embedding query the image embedding, round 2 lets
the image embedding query the updated tactile one; each round is
multi-head attention, output projection and layer norm (no residual).
Dropout is stored but inert.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .preprocess import IMG_H, IMG_W

D_MODEL = 768
NUM_HEADS = 8
DECODER_HIDDEN = 768
DROPOUT = 0.20
EMA_DECAY = 0.9995
CNN_CHANNELS = (3, 16, 64, 256)
LN_EPS = 1e-5


class ShapeMismatch(ValueError):
    pass


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def cnn_output_hw(h=IMG_H, w=IMG_W, layers=3):
    for _ in range(layers):
        h, w = (h + 2 - 3) // 2 + 1, (w + 2 - 3) // 2 + 1
    return h, w


def init_params(seed=42, d=D_MODEL, num_heads=NUM_HEADS, hidden=DECODER_HIDDEN, dropout=DROPOUT):
    """Seeded weights, uniform in +/- 1/sqrt(fan_in) for weights and biases."""
    if d % num_heads:
        raise ValueError(f"d={d} is not divisible by num_heads={num_heads}")
    rng = np.random.default_rng(seed)
    p = {}
    for i, (cin, cout) in enumerate(zip(CNN_CHANNELS[:-1], CNN_CHANNELS[1:]), start=1):
        fan = cin * 9
        p[f"cnn.conv{i}.weight"] = _uniform(rng, (cout, cin, 3, 3), fan)
        p[f"cnn.conv{i}.bias"] = _uniform(rng, (cout,), fan)
    oh, ow = cnn_output_hw()
    flat = CNN_CHANNELS[-1] * oh * ow
    p["cnn.proj.weight"] = _uniform(rng, (d, flat), flat)
    p["cnn.proj.bias"] = _uniform(rng, (d,), flat)
    for r in (1, 2):
        for name in "qkvo":
            p[f"fuse.r{r}.{name}.weight"] = _uniform(rng, (d, d), d)
            p[f"fuse.r{r}.{name}.bias"] = _uniform(rng, (d,), d)
        p[f"fuse.r{r}.norm.weight"] = np.ones(d)
        p[f"fuse.r{r}.norm.bias"] = np.zeros(d)
    p["dec.fc1.weight"] = _uniform(rng, (hidden, 2 * d), 2 * d)
    p["dec.fc1.bias"] = _uniform(rng, (hidden,), 2 * d)
    p["dec.fc2.weight"] = _uniform(rng, (IMG_H * IMG_W, hidden), hidden)
    p["dec.fc2.bias"] = _uniform(rng, (IMG_H * IMG_W,), hidden)
    p["meta.num_heads"] = np.array([float(num_heads)])
    p["meta.dropout"] = np.array([float(dropout)])
    return p


def embed_dim(params):
    return params["cnn.proj.weight"].shape[0]


def num_heads(params):
    return int(params["meta.num_heads"][0])


def _relu(x):
    return np.maximum(x, 0.0)


def _identity(x):
    return x


def conv2d(x, weight, bias, stride=2, pad=1):
    """Direct-window 2D convolution of a (C, H, W) input."""
    cout, cin, kh, kw = weight.shape
    if x.ndim != 3 or x.shape[0] != cin:
        raise ShapeMismatch(f"conv expects ({cin}, H, W) input, got {x.shape}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.einsum("chwij,ocij->ohw", win, weight, optimize=True) + bias[:, None, None]


def tactile_encode(img, params, linear=False):
    """3-layer stride-2 CNN then an affine map to a d-vector.

    ``linear=True`` swaps ReLU for the identity so the whole map is affine.
    """
    x = np.asarray(img, dtype=np.float64)
    if x.shape != (3, IMG_H, IMG_W):
        raise ShapeMismatch(f"tactile input must be (3, {IMG_H}, {IMG_W}), got {x.shape}")
    act = _identity if linear else _relu
    for i in (1, 2, 3):
        x = act(conv2d(x, params[f"cnn.conv{i}.weight"], params[f"cnn.conv{i}.bias"]))
    w = params["cnn.proj.weight"]
    if w.shape[1] != x.size:
        raise ShapeMismatch(f"projection expects {w.shape[1]} features, CNN gave {x.size}")
    return w @ x.ravel() + params["cnn.proj.bias"]


def layer_norm(x, gamma, beta, eps=LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def softmax(scores, axis=-1):
    z = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cross_attend(q_seq, kv_seq, params, prefix="fuse.r1", heads=None, details=False):
    """Multi-head cross-attention followed by layer norm.

    ``q_seq`` is (n_q, d), ``kv_seq`` is (n_k, d). Scores are scaled by
    1/sqrt(d/heads) and softmaxed over keys. With ``details=True`` returns
    ``(out, weights, pre_norm)`` where weights are (heads, n_q, n_k).
    """
    q_seq = np.atleast_2d(np.asarray(q_seq, dtype=np.float64))
    kv_seq = np.atleast_2d(np.asarray(kv_seq, dtype=np.float64))
    wq = params[f"{prefix}.q.weight"]
    d = wq.shape[0]
    if q_seq.shape[1] != d or kv_seq.shape[1] != d:
        raise ShapeMismatch(f"attention expects dim {d}, got {q_seq.shape} and {kv_seq.shape}")
    h = num_heads(params) if heads is None else heads
    if d % h:
        raise ShapeMismatch(f"d={d} not divisible by heads={h}")
    dh = d // h

    def proj(x, n):
        return x @ params[f"{prefix}.{n}.weight"].T + params[f"{prefix}.{n}.bias"]

    def split(x):
        return x.reshape(x.shape[0], h, dh).transpose(1, 0, 2)

    q, k, v = split(proj(q_seq, "q")), split(proj(kv_seq, "k")), split(proj(kv_seq, "v"))
    weights = softmax(q @ k.transpose(0, 2, 1) / np.sqrt(dh))
    heads_out = weights @ v  # (h, n_q, dh)
    concat = heads_out.transpose(1, 0, 2).reshape(q_seq.shape[0], d)
    pre_norm = proj(concat, "o")
    out = layer_norm(pre_norm, params[f"{prefix}.norm.weight"], params[f"{prefix}.norm.bias"])
    if details:
        return out, weights, pre_norm
    return out


def fuse(z_tac, z_img, params, heads=None):
    """``[tac''; img'']`` of length 2d from the two attention rounds."""
    z_tac = np.asarray(z_tac, dtype=np.float64).reshape(1, -1)
    z_img = np.asarray(z_img, dtype=np.float64).reshape(1, -1)
    if z_tac.shape != z_img.shape:
        raise ShapeMismatch(f"embedding sizes differ: {z_tac.shape[1]} vs {z_img.shape[1]}")
    tac2 = cross_attend(z_tac, z_img, params, "fuse.r1", heads)
    img2 = cross_attend(z_img, tac2, params, "fuse.r2", heads)
    return np.concatenate([tac2[0], img2[0]])


def reconstruct(z_fusion, params, linear=False):
    """Two-layer MLP plus sigmoid -> (1, 24, 32), clipped into the open interval (0, 1)."""
    z = np.asarray(z_fusion, dtype=np.float64).ravel()
    w1 = params["dec.fc1.weight"]
    if z.size != w1.shape[1]:
        raise ShapeMismatch(f"decoder expects {w1.shape[1]} inputs, got {z.size}")
    hidden = w1 @ z + params["dec.fc1.bias"]
    hidden = hidden if linear else _relu(hidden)
    logits = params["dec.fc2.weight"] @ hidden + params["dec.fc2.bias"]
    out = 0.5 * (1.0 + np.tanh(0.5 * logits))  # overflow-free sigmoid
    tiny = np.finfo(np.float64).tiny
    out = np.clip(out, tiny, np.nextafter(1.0, 0.0))
    return out.reshape(1, IMG_H, IMG_W)


def mse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def reconstruction_loss(target, recon):
    """Mean squared error over the 768 pixels of a 24x32 tactile image."""
    ok = ((IMG_H, IMG_W), (1, IMG_H, IMG_W))
    t = np.asarray(target, dtype=np.float64)
    r = np.asarray(recon, dtype=np.float64)
    if t.shape not in ok or r.shape not in ok:
        raise ShapeMismatch(f"reconstruction loss expects {IMG_H}x{IMG_W} images, got {t.shape} and {r.shape}")
    return mse(t.reshape(IMG_H, IMG_W), r.reshape(IMG_H, IMG_W))


def ema_update(target, online, decay=EMA_DECAY):
    """``decay * target + (1 - decay) * online`` for every parameter."""
    if target.keys() != online.keys():
        raise ShapeMismatch("parameter sets have different names")
    out = {}
    for name, t in target.items():
        o = online[name]
        if t.shape != o.shape:
            raise ShapeMismatch(f"{name}: {t.shape} vs {o.shape}")
        out[name] = decay * t + (1.0 - decay) * o
    return out


def encode_pair(tactile_rgb, z_img, params, linear=False):
    """Masked tactile image + image embedding -> fused 2d vector."""
    return fuse(tactile_encode(tactile_rgb, params, linear), z_img, params)
