#!/usr/bin/env python3
"""Regenerates the golden JSON files from a from-scratch NumPy model.

Nothing here calls the C++ code: the generator, sampling, stub encoder,
pooled-statistics features, network init and convolutions are written out
again so the C++ results can be checked against an independent computation.

    python3 tests/golden/make_golden.py
"""

import json
import math
from pathlib import Path

import numpy as np

MASK = (1 << 64) - 1
HERE = Path(__file__).resolve().parent


class MT19937_64:
    NN, MM = 312, 156

    def __init__(self, seed):
        self.mt = [0] * self.NN
        self.mt[0] = seed & MASK
        for i in range(1, self.NN):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK
        self.idx = self.NN

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(self.NN):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % self.NN] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + self.MM) % self.NN] ^ xa
        self.idx = 0

    def __call__(self):
        if self.idx >= self.NN:
            self._twist()
        x = self.mt[self.idx]
        self.idx += 1
        x ^= (x >> 29) & 0x5555555555555555
        x ^= (x << 17) & 0x71D67FFFEDA60000
        x ^= (x << 37) & 0xFFF7EEE000000000
        x ^= x >> 43
        return x & MASK


def mix_seed(a, b=0):
    z = (a + 0x9E3779B97F4A7C15 * (b + 1)) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class Rng:
    def __init__(self, seed):
        self.e = MT19937_64(seed)
        self.spare = None

    def uniform(self, lo=0.0, hi=1.0):
        u = (self.e() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def index(self, n):
        if n <= 1:
            return 0
        limit = MASK - (MASK % n)
        while True:
            v = self.e()
            if v < limit:
                return v % n

    def coin(self):
        return (self.e() >> 63) != 0

    def normal(self):
        if self.spare is not None:
            s, self.spare = self.spare, None
            return s
        u1 = 0.0
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self.spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)


# ---------------------------------------------------------------------------
# Fixed inputs shared with the C++ tests (same closed forms on both sides).

def pattern_a(c, h, w):
    y, x = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack([0.5 + 0.4 * np.sin(0.3 * (x + 1) * (k + 1) + 0.2 * y) for k in range(c)])


def pattern_b(c, h, w):
    y, x = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack([0.5 + 0.4 * np.cos(0.25 * x - 0.35 * (y + 1) * (k + 1)) for k in range(c)])


# ---------------------------------------------------------------------------
# Sampling

def patch_specs(sizes, patch, batch, seed):
    rng = Rng(mix_seed(seed, 0x7061746368))
    out = []
    for _ in range(batch):
        i = rng.index(len(sizes))
        h, w = sizes[i]
        y = rng.index(h - patch + 1)
        x = rng.index(w - patch + 1)
        flip = rng.coin()
        rot = rng.index(4)
        out.append({"pair_index": i, "y": y, "x": x, "flip": flip, "rotation": rot})
    return out


def episode_indices(n, shots, query, seed):
    idx = list(range(n))
    rng = Rng(mix_seed(seed, 0x657069736F6465))
    for i in range(shots + query):
        j = i + rng.index(n - i)
        idx[i], idx[j] = idx[j], idx[i]
    return idx[:shots], idx[shots:shots + query]


# ---------------------------------------------------------------------------
# Stub encoder and pooled features

def adaptive_pool(x, oh, ow):
    c, h, w = x.shape
    out = np.zeros((c, oh, ow))
    for i in range(oh):
        y0, y1 = (i * h) // oh, -((-(i + 1) * h) // oh)
        for j in range(ow):
            x0, x1 = (j * w) // ow, -((-(j + 1) * w) // ow)
            out[:, i, j] = x[:, y0:y1, x0:x1].mean(axis=(1, 2))
    return out


def stub_params(embed_dim):
    rng = Rng(mix_seed(0x5354554245, embed_dim))
    scale = 1.0 / math.sqrt(64)
    p = np.array([rng.normal() * scale for _ in range(embed_dim * 64)]).reshape(embed_dim, 64)
    b = np.array([rng.normal() for _ in range(embed_dim)])
    return p, b


def stub_embed(img, embed_dim):
    # img is already input_size x input_size, so the resize is the identity.
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    gray = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    s = adaptive_pool(gray[None], 8, 8).reshape(-1)
    p, b = stub_params(embed_dim)
    raw = np.tanh(b + 4.0 * p @ (s - 0.5))
    return raw / np.linalg.norm(raw)


def pooled_perceptual(a, b):
    total = 0.0
    for g in (16, 8, 4):
        d = adaptive_pool(a, g, g) - adaptive_pool(b, g, g)
        total += float(np.mean(d * d))
    return total


# ---------------------------------------------------------------------------
# Network pieces

def layer_plan(cfg):
    C, I = cfg["backbone_channels"], cfg["channels"]
    c, h, s = cfg["clip_dim"], cfg["mlp_hidden"], cfg["mlp_out"]
    plan = [("backbone.head", (C, I, 3, 3), I * 9, False)]
    for i in range(cfg["backbone_blocks"]):
        plan.append((f"backbone.blocks.{i}.conv1", (C, C, 3, 3), C * 9, False))
        plan.append((f"backbone.blocks.{i}.conv2", (C, C, 3, 3), C * 9, True))
    plan.append(("backbone.tail", (C, C, 3, 3), C * 9, False))
    plan.append(("align.mlp.fc1", (h, c), c, False))
    plan.append(("align.mlp.fc2", (s, h), h, False))
    plan.append(("align.norm", (s,), 0, None))
    plan.append(("align.spatial.conv1", (C, s, 3, 3), s * 9, False))
    plan.append(("align.spatial.conv2", (C, C, 3, 3), C * 9, False))
    plan.append(("align.fusion", (C, 2 * C, 1, 1), 2 * C, True))
    stages = int(math.log2(cfg["scale"]))
    gap = cfg["recon_blocks_per_stage"] if cfg["scale"] >= 8 else 0
    for k in range(stages):
        plan.append((f"recon.stages.{k}.expand", (4 * C, C, 3, 3), C * 9, False))
        plan.append((f"recon.stages.{k}.refine", (C, C, 3, 3), C * 9, False))
        if k + 1 < stages:
            for j in range(gap):
                plan.append((f"recon.stages.{k}.blocks.{j}.conv1", (C, C, 3, 3), C * 9, False))
                plan.append((f"recon.stages.{k}.blocks.{j}.conv2", (C, C, 3, 3), C * 9, True))
    plan.append(("recon.out", (I, C, 3, 3), C * 9, True))
    return plan


def init_network(cfg, seed):
    rng = Rng(mix_seed(seed, 0x696E6974))
    p = {}
    for name, shape, fan_in, zero in layer_plan(cfg):
        if zero is None:
            p[name + ".gain"] = np.ones(shape)
            p[name + ".bias"] = np.zeros(shape)
            continue
        w = np.zeros(int(np.prod(shape)))
        if not zero:
            bound = math.sqrt(6.0 / fan_in)
            w = np.array([rng.uniform(-bound, bound) for _ in range(w.size)])
        p[name + ".weight"] = w.reshape(shape)
        p[name + ".bias"] = np.zeros(shape[0])
    return p


def conv(x, w, b):
    """Zero-padded 'same' cross-correlation, odd square kernels."""
    o, c, k, _ = w.shape
    _, h, wd = x.shape
    pad = k // 2
    xp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    y = np.zeros((o, h, wd)) + b[:, None, None]
    for ky in range(k):
        for kx in range(k):
            y += np.einsum("oc,chw->ohw", w[:, :, ky, kx], xp[:, ky:ky + h, kx:kx + wd])
    return y


def backbone(p, cfg, x):
    head = conv(x, p["backbone.head.weight"], p["backbone.head.bias"])
    h = head
    for i in range(cfg["backbone_blocks"]):
        n = f"backbone.blocks.{i}"
        mid = np.maximum(conv(h, p[n + ".conv1.weight"], p[n + ".conv1.bias"]), 0)
        h = h + conv(mid, p[n + ".conv2.weight"], p[n + ".conv2.bias"])
    return conv(h, p["backbone.tail.weight"], p["backbone.tail.bias"]) + head


def spatial(p, f_proc, h, w):
    mean = f_proc.mean()
    var = ((f_proc - mean) ** 2).mean()
    normed = (f_proc - mean) / math.sqrt(var + 1e-5) * p["align.norm.gain"] + p["align.norm.bias"]
    broadcast = np.repeat(np.repeat(normed[:, None, None], h, axis=1), w, axis=2)
    mid = np.maximum(conv(broadcast, p["align.spatial.conv1.weight"], p["align.spatial.conv1.bias"]), 0)
    return conv(mid, p["align.spatial.conv2.weight"], p["align.spatial.conv2.bias"])


def checksum(a):
    a = np.asarray(a, dtype=float)
    weights = np.arange(1, a.size + 1) % 7 + 1
    return {"sum": float(a.sum()), "sum_sq": float((a * a).sum()), "weighted": float((a.reshape(-1) * weights).sum())}


# ---------------------------------------------------------------------------
# Tiny CLIP-layout vision transformer with seeded weights

CLIP_MEAN = np.array([0.48145466, 0.4578275, 0.40821073])
CLIP_STD = np.array([0.26862954, 0.26130258, 0.27577711])


def vit_layout(cfg):
    d, p, e = cfg["width"], cfg["patch_size"], cfg["embed_dim"]
    tokens = (cfg["image_size"] // p) ** 2 + 1
    names = [("visual.conv1.weight", (d, 3, p, p)), ("visual.class_embedding", (d,)),
             ("visual.positional_embedding", (tokens, d)), ("visual.ln_pre.weight", (d,)),
             ("visual.ln_pre.bias", (d,))]
    for l in range(cfg["layers"]):
        b = f"visual.transformer.resblocks.{l}."
        names += [(b + "ln_1.weight", (d,)), (b + "ln_1.bias", (d,)),
                  (b + "attn.in_proj_weight", (3 * d, d)), (b + "attn.in_proj_bias", (3 * d,)),
                  (b + "attn.out_proj.weight", (d, d)), (b + "attn.out_proj.bias", (d,)),
                  (b + "ln_2.weight", (d,)), (b + "ln_2.bias", (d,)),
                  (b + "mlp.c_fc.weight", (4 * d, d)), (b + "mlp.c_fc.bias", (4 * d,)),
                  (b + "mlp.c_proj.weight", (d, 4 * d)), (b + "mlp.c_proj.bias", (d,))]
    names += [("visual.ln_post.weight", (d,)), ("visual.ln_post.bias", (d,)), ("visual.proj", (d, e))]
    return names


def vit_weights(cfg, seed, scale):
    # Norm gains are 1 + noise; everything else is scaled noise.
    rng = Rng(seed)
    w = {}
    for name, shape in vit_layout(cfg):
        v = np.array([rng.normal() * scale for _ in range(int(np.prod(shape)))]).reshape(shape)
        if name.endswith(".weight") and ("ln_" in name):
            v = v + 1.0
        w[name] = v
    return w


def layer_norm_rows(x, g, b):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * g + b


def vit_embed(cfg, w, img):
    d, p, heads = cfg["width"], cfg["patch_size"], cfg["heads"]
    g = cfg["image_size"] // p
    x = (img - CLIP_MEAN[:, None, None]) / CLIP_STD[:, None, None]
    patches = np.array([x[:, py * p:(py + 1) * p, px * p:(px + 1) * p].reshape(-1)
                        for py in range(g) for px in range(g)])
    tok = patches @ w["visual.conv1.weight"].reshape(d, -1).T
    tok = np.vstack([w["visual.class_embedding"][None], tok]) + w["visual.positional_embedding"]
    tok = layer_norm_rows(tok, w["visual.ln_pre.weight"], w["visual.ln_pre.bias"])
    dh = d // heads
    for l in range(cfg["layers"]):
        b = f"visual.transformer.resblocks.{l}."
        h = layer_norm_rows(tok, w[b + "ln_1.weight"], w[b + "ln_1.bias"])
        qkv = h @ w[b + "attn.in_proj_weight"].T + w[b + "attn.in_proj_bias"]
        q, k, v = qkv[:, :d], qkv[:, d:2 * d], qkv[:, 2 * d:]
        outs = []
        for hd in range(heads):
            sl = slice(hd * dh, (hd + 1) * dh)
            s = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
            s = np.exp(s - s.max(axis=1, keepdims=True))
            s /= s.sum(axis=1, keepdims=True)
            outs.append(s @ v[:, sl])
        tok = tok + np.hstack(outs) @ w[b + "attn.out_proj.weight"].T + w[b + "attn.out_proj.bias"]
        h = layer_norm_rows(tok, w[b + "ln_2.weight"], w[b + "ln_2.bias"])
        m = h @ w[b + "mlp.c_fc.weight"].T + w[b + "mlp.c_fc.bias"]
        m = m / (1.0 + np.exp(-1.702 * m))
        tok = tok + m @ w[b + "mlp.c_proj.weight"].T + w[b + "mlp.c_proj.bias"]
    pooled = layer_norm_rows(tok[:1], w["visual.ln_post.weight"], w["visual.ln_post.bias"])
    e = (pooled @ w["visual.proj"])[0]
    return e / np.linalg.norm(e)


# ---------------------------------------------------------------------------
# Adam on (w - 3)^2

def adam_trace(w0, lr, steps):
    b1, b2, eps = 0.9, 0.999, 1e-8
    w, m, v = w0, 0.0, 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2.0 * (w - 3.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        out.append({"step": t, "w": w, "loss": (w - 3.0) ** 2})
    return out


def main():
    small = {"scale": 2, "channels": 3, "backbone_channels": 4, "backbone_blocks": 1, "clip_dim": 16,
             "mlp_hidden": 12, "mlp_out": 8, "recon_blocks_per_stage": 1}
    p = init_network(small, 0)
    f_proc = np.array([0.1 * (i + 1) - 0.3 for i in range(small["mlp_out"])])

    a32, b32 = pattern_a(3, 32, 32), pattern_b(3, 32, 32)
    vit_cfg = {"image_size": 8, "patch_size": 4, "width": 8, "layers": 2, "heads": 2, "embed_dim": 6}
    golden = {
        "patch_specs": {
            "lr_sizes": [[20, 24], [16, 16]],
            "scale": 2,
            "patch": 8,
            "batch": 6,
            "seed": 0,
            "specs": patch_specs([(20, 24), (16, 16)], 8, 6, 0),
        },
        "episode": dict(zip(("support", "query"), episode_indices(10, 5, 3, 0)), n=10, shots=5, query_size=3, seed=0),
        "stub_zero": {"embed_dim": 64, "input_size": 32, "values": stub_embed(np.zeros((3, 32, 32)), 64).tolist()},
        "losses": {
            "size": 32,
            "perceptual_pooled": pooled_perceptual(a32, b32),
            "semantic_stub": float(np.sum((stub_embed(a32, 64) - stub_embed(b32, 64)) ** 2)),
            "semantic_embed_dim": 64,
        },
        "network": {
            "config": small,
            "seed": 0,
            "backbone_input": [8, 8],
            "backbone": checksum(backbone(p, small, pattern_a(3, 8, 8))),
            "spatial_size": [6, 5],
            "f_proc": f_proc.tolist(),
            "spatial": checksum(spatial(p, f_proc, 6, 5)),
        },
        "vit": {
            "config": vit_cfg,
            "weight_seed": 17,
            "weight_scale": 0.3,
            "embedding": vit_embed(vit_cfg, vit_weights(vit_cfg, 17, 0.3), pattern_a(3, 8, 8)).tolist(),
        },
        "adam": {"w0": 0.0, "lr": 0.1, "trace": adam_trace(0.0, 0.1, 5)},
    }
    (HERE / "golden.json").write_text(json.dumps(golden, indent=1) + "\n")
    print("wrote", HERE / "golden.json")


if __name__ == "__main__":
    main()
