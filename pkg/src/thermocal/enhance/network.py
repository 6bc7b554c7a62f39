"""Curve-estimation network: cross-attention fusion followed by a
seven-layer skip-connected CNN that emits eight curve parameter maps.

Data flow for one (target, reference) pair of normalized planes::

    c_t, c_r  = each plane minus its region mean (zero outside the region)
    z_t, z_r  = c divided by the region's standard deviation
    F_t, F_r  = 1x1 lift of (c, z) to ``width`` channels
    Q, K, V   = tokens of avg-pooled F_t (Q) and F_r (K, V) after ``stages`` 2x pools
    fused     = nearest-upsampled softmax(Q K^T / sqrt(d_k)) V
    X         = concat(F_t, fused)
    Y1..Y4    = ReLU(conv(.))           chain
    Y5        = ReLU(conv(concat(Y4, Y3)))
    Y6        = ReLU(conv(concat(Y5, Y2)))
    theta     = tanh(conv(concat(Y6, Y1)) + L s)   8 channels

s holds the two region means, standardized with statistics of the training
set, and L is a linear head. The inputs are centered so that zero padding
does not make flat regions look different at the frame border; the region
levels reach theta through L instead.

Tensors named ``stats.*`` are buffers: they are set from data, never by
gradient descent, and always receive a zero gradient.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InputError
from . import layers

MAGIC = b"THCW"
FORMAT_VERSION = 1
N_THETA = 8


@dataclass(frozen=True)
class AttentionConfig:
    stages: int = 4
    d_k: int = 32

    def __post_init__(self):
        if self.stages < 1:
            raise InputError("attention needs at least one downsampling stage")
        if self.d_k < 1:
            raise InputError("d_k must be positive")


# conv name -> (sources concatenated as input, output channels); "x" = network input
SKIP_SCHEDULE = {
    "conv1": (("x",), None),
    "conv2": (("conv1",), None),
    "conv3": (("conv2",), None),
    "conv4": (("conv3",), None),
    "conv5": (("conv4", "conv3"), None),
    "conv6": (("conv5", "conv2"), None),
    "conv7": (("conv6", "conv1"), N_THETA),
}


@dataclass
class NetworkWeights:
    params: dict = field(default_factory=dict)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    width: int = 32
    rng_seed: int = 0

    @classmethod
    def initialize(cls, seed: int = 0, attention: AttentionConfig | None = None, width: int = 32,
                   final_scale: float = 1e-2) -> "NetworkWeights":
        """He-normal initialization; the last layer is scaled down so theta starts near 0."""
        attention = attention or AttentionConfig()
        rng = np.random.default_rng(seed)
        p = {}
        p["lift.w"] = rng.normal(0.0, 1.0, (width, 2))
        p["lift.b"] = rng.normal(0.0, 0.1, (width,))
        p["attn.wq"] = rng.normal(0.0, 1.0 / np.sqrt(width), (width, attention.d_k))
        p["attn.wk"] = rng.normal(0.0, 1.0 / np.sqrt(width), (width, attention.d_k))
        p["attn.wv"] = rng.normal(0.0, 1.0 / np.sqrt(width), (width, width))
        for name, (sources, out) in SKIP_SCHEDULE.items():
            cin = 2 * width if sources == ("x",) else width * len(sources)
            cout = out or width
            std = np.sqrt(2.0 / (cin * 9))
            if out is not None:
                std *= final_scale
            p[f"{name}.w"] = rng.normal(0.0, std, (cout, cin, 3, 3))
            p[f"{name}.b"] = np.zeros(cout)
        p["level.w"] = np.zeros((N_THETA, 2))
        p["stats.level_center"] = np.zeros(2)
        p["stats.level_scale"] = np.ones(2)
        return cls(p, attention, width, seed)

    @classmethod
    def zeros_like(cls, other: "NetworkWeights") -> "NetworkWeights":
        """All learnable tensors zero; ``stats.*`` buffers are copied."""
        return cls({k: v.copy() if k.startswith("stats.") else np.zeros_like(v) for k, v in other.params.items()},
                   other.attention, other.width, other.rng_seed)

    def copy(self) -> "NetworkWeights":
        return NetworkWeights({k: v.copy() for k, v in self.params.items()},
                              self.attention, self.width, self.rng_seed)

    # ---------------------------------------------------------- serialization
    def to_bytes(self) -> bytes:
        tensors = dict(self.params)
        tensors["config.stages"] = np.array(float(self.attention.stages))
        tensors["config.d_k"] = np.array(float(self.attention.d_k))
        tensors["config.width"] = np.array(float(self.width))
        tensors["config.rng_seed"] = np.array(float(self.rng_seed))
        out = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8")
            raw = name.encode("utf-8")
            out.append(struct.pack("<I", len(raw)))
            out.append(raw)
            out.append(struct.pack("<I", arr.ndim))
            out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            out.append(arr.tobytes(order="C"))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "NetworkWeights":
        if data[:4] != MAGIC:
            raise InputError("not a THCW weights file (bad magic)")
        (version,) = struct.unpack_from("<I", data, 4)
        if version != FORMAT_VERSION:
            raise InputError(f"unsupported THCW version {version}")
        pos = 8
        tensors = {}
        try:
            while pos < len(data):
                (nlen,) = struct.unpack_from("<I", data, pos)
                pos += 4
                name = data[pos:pos + nlen].decode("utf-8")
                pos += nlen
                (rank,) = struct.unpack_from("<I", data, pos)
                pos += 4
                dims = struct.unpack_from(f"<{rank}I", data, pos)
                pos += 4 * rank
                count = int(np.prod(dims)) if rank else 1
                arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(dims)
                pos += 8 * count
                tensors[name] = arr.astype(float)
        except (struct.error, ValueError) as exc:
            raise InputError(f"truncated THCW file: {exc}") from exc
        cfg = {k: int(tensors.pop(k)) for k in list(tensors) if k.startswith("config.")}
        attention = AttentionConfig(cfg.get("config.stages", 4), cfg.get("config.d_k", 32))
        return cls(tensors, attention, cfg.get("config.width", 32), cfg.get("config.rng_seed", 0))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "NetworkWeights":
        return cls.from_bytes(Path(path).read_bytes())


def _pad_to_multiple(x, m):
    c, h, w = x.shape
    ph = (-h) % m
    pw = (-w) % m
    return np.pad(x, ((0, 0), (0, ph), (0, pw)))


def pool_tokens(features, stages):
    """Pad to a multiple of 2**stages, average-pool ``stages`` times and flatten to (tokens, C)."""
    x = _pad_to_multiple(features, 2 ** stages)
    for _ in range(stages):
        x = layers.avg_pool2(x)
    c, h, w = x.shape
    return x.reshape(c, h * w).T, (h, w)


def cross_attention(target_feats, reference_feats, weights: NetworkWeights):
    """Fuse target (query) and reference (key/value) features.

    Inputs are (C, H, W) maps; the result has the same shape and carries
    reference information attended from the target's viewpoint.
    """
    out, _ = _attention_forward(target_feats, reference_feats, weights)
    return out


def _attention_forward(ft, fr, w: NetworkWeights):
    stages = w.attention.stages
    tok_t, grid = pool_tokens(ft, stages)
    tok_r, _ = pool_tokens(fr, stages)
    p = w.params
    q = tok_t @ p["attn.wq"]
    k = tok_r @ p["attn.wk"]
    v = tok_r @ p["attn.wv"]
    o, probs = layers.scaled_dot_attention(q, k, v)
    c = o.shape[1]
    fused = layers.upsample_nearest(o.T.reshape(c, *grid), 2 ** stages)
    h, wd = ft.shape[1:]
    cache = (tok_t, tok_r, q, k, v, probs, grid, fused.shape)
    return fused[:, :h, :wd], cache


def _attention_backward(g_fused, ft_shape, cache, w: NetworkWeights, grads):
    tok_t, tok_r, q, k, v, probs, grid, full_shape = cache
    stages = w.attention.stages
    p = w.params
    g_full = np.zeros(full_shape)
    g_full[:, :ft_shape[1], :ft_shape[2]] = g_fused
    g_grid = layers.upsample_nearest_backward(g_full, 2 ** stages)
    g_o = g_grid.reshape(g_grid.shape[0], -1).T
    dq, dk, dv = layers.scaled_dot_attention_backward(g_o, q, k, v, probs)
    grads["attn.wq"] += tok_t.T @ dq
    grads["attn.wk"] += tok_r.T @ dk
    grads["attn.wv"] += tok_r.T @ dv
    g_tok_t = dq @ p["attn.wq"].T
    g_tok_r = dk @ p["attn.wk"].T + dv @ p["attn.wv"].T
    return _unpool(g_tok_t, grid, stages, ft_shape), _unpool(g_tok_r, grid, stages, ft_shape)


def _unpool(g_tok, grid, stages, shape):
    c = g_tok.shape[1]
    g = g_tok.T.reshape(c, *grid)
    for _ in range(stages):
        g = layers.avg_pool2_backward(g)
    return g[:, :shape[1], :shape[2]]


def skip_cnn_forward(x, weights: NetworkWeights, return_cache: bool = False, final_offset=None):
    """Seven-layer skip CNN on a (C, H, W) input; returns theta of shape (8, H, W)."""
    p = weights.params
    acts = {"x": x}
    cache = {}
    for name, (sources, out) in SKIP_SCHEDULE.items():
        inp = acts[sources[0]] if len(sources) == 1 else np.concatenate([acts[s] for s in sources])
        z, cols = layers.conv3_forward(inp, p[f"{name}.w"], p[f"{name}.b"])
        if out is not None and final_offset is not None:
            z = z + np.asarray(final_offset)[:, None, None]
        a = np.tanh(z) if out is not None else np.maximum(z, 0.0)
        acts[name] = a
        cache[name] = (cols, z, inp.shape)
    theta = acts["conv7"]
    if return_cache:
        return theta, (acts, cache)
    return theta


def skip_cnn_backward(g_theta, state, weights: NetworkWeights, grads):
    """Backprop through the CNN; returns d loss / d input."""
    acts, cache = state
    p = weights.params
    g_acts = {name: np.zeros_like(a) for name, a in acts.items()}
    g_acts["conv7"] = g_theta
    for name in reversed(list(SKIP_SCHEDULE)):
        sources, out = SKIP_SCHEDULE[name]
        cols, z, in_shape = cache[name]
        a = acts[name]
        if out is not None:
            gz = g_acts[name] * (1.0 - a * a)
        else:
            # subgradient 0 at z == 0
            gz = g_acts[name] * (z > 0)
        dx, dw, db = layers.conv3_backward(gz, cols, p[f"{name}.w"], in_shape)
        grads[f"{name}.w"] += dw
        grads[f"{name}.b"] += db
        offset = 0
        for s in sources:
            n = acts[s].shape[0]
            g_acts[s] += dx[offset:offset + n]
            offset += n
    return g_acts["x"]


def region_levels(target_plane, reference_plane, target_mask=None, reference_mask=None) -> np.ndarray:
    """Raw (unstandardized) level features: the mean of each plane over its region."""
    return np.array([_region_mean(target_plane, target_mask), _region_mean(reference_plane, reference_mask)])


def _region_mean(plane, mask) -> float:
    if mask is None:
        return float(np.mean(plane))
    mask = np.asarray(mask, dtype=bool)
    return float(plane[mask].mean()) if mask.any() else 0.0


def network_inputs(plane, mask=None, floor: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Centered and standardized copies of ``plane`` over ``mask`` (whole plane if None).

    Both are zero outside the mask. Centering keeps a flat region flat all the
    way to the frame border under zero padding; standardizing gives an input
    whose scale does not depend on how saturated the region is (spreads of
    1e-4 are common for low-emissivity material).
    """
    plane = np.asarray(plane, dtype=float)
    mask = np.ones(plane.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.zeros_like(plane), np.zeros_like(plane)
    vals = plane[mask]
    c = np.where(mask, plane - vals.mean(), 0.0)
    return c, c / max(float(vals.std()), floor)


def _lift(plane, z, p):
    w = p["lift.w"]
    return (w[:, 0, None, None] * plane + w[:, 1, None, None] * z + p["lift.b"][:, None, None])


def network_forward(target_plane, reference_plane, weights: NetworkWeights, return_cache: bool = False,
                    target_mask=None, reference_mask=None):
    """Full forward pass: normalized planes (H, W) -> theta (8, H, W).

    The masks scope the input normalization; region statistics are treated
    as constants by the backward pass.
    """
    t = np.asarray(target_plane, dtype=float)
    r = np.asarray(reference_plane, dtype=float)
    if t.shape != r.shape:
        raise InputError(f"target {t.shape} and reference {r.shape} planes differ in shape")
    p = weights.params
    ct, zt = network_inputs(t, target_mask)
    cr, zr = network_inputs(r, reference_mask)
    ft = _lift(ct, zt, p)
    fr = _lift(cr, zr, p)
    levels = (region_levels(t, r, target_mask, reference_mask) - p["stats.level_center"]) / p["stats.level_scale"]
    fused, attn_cache = _attention_forward(ft, fr, weights)
    x = np.concatenate([ft, fused])
    theta, cnn_state = skip_cnn_forward(x, weights, return_cache=True, final_offset=p["level.w"] @ levels)
    if return_cache:
        return theta, (ct, cr, zt, zr, levels, ft, attn_cache, cnn_state)
    return theta


def network_backward(g_theta, cache, weights: NetworkWeights):
    """Gradient of a scalar loss w.r.t. every parameter given d loss / d theta."""
    ct, cr, zt, zr, levels, ft, attn_cache, cnn_state = cache
    grads = {k: np.zeros_like(v) for k, v in weights.params.items()}
    gx = skip_cnn_backward(g_theta, cnn_state, weights, grads)
    # the final bias gradient is the pixel sum of d loss / d pre-activation
    grads["level.w"] += np.outer(grads["conv7.b"], levels)
    c = ft.shape[0]
    g_ft = gx[:c].copy()
    g_att_t, g_fr = _attention_backward(gx[c:], ft.shape, attn_cache, weights, grads)
    g_ft += g_att_t
    grads["lift.w"][:, 0] += np.sum(g_ft * ct, axis=(1, 2)) + np.sum(g_fr * cr, axis=(1, 2))
    grads["lift.w"][:, 1] += np.sum(g_ft * zt, axis=(1, 2)) + np.sum(g_fr * zr, axis=(1, 2))
    grads["lift.b"] += np.sum(g_ft, axis=(1, 2)) + np.sum(g_fr, axis=(1, 2))
    return grads
