#!/usr/bin/env python3
"""Convert pretrained CLIP ViT and VGG-19 weights into cdasr archives.

The C++ side reads the OpenAI CLIP naming (visual.*) and torchvision's
features.<i> naming. Hugging Face checkpoints are renamed on the way in.

    python tools/convert_weights.py clip --out ~/.cache/cdasr/clip-vit-b32.cdasr
    python tools/convert_weights.py vgg --out ~/.cache/cdasr/vgg19-features.cdasr
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np

MAGIC_HEAD = b"CDASRARC"
MAGIC_TAIL = b"CDASREND"
VERSION = 1
DTYPES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}

# Conv layers of VGG-19 up to relu3_4.
VGG_CONVS = [0, 2, 5, 7, 10, 12, 14, 16]


def write_archive(path, meta, arrays):
    out = bytearray(MAGIC_HEAD)
    out += struct.pack("<I", VERSION)
    blob = json.dumps(meta, sort_keys=True).encode()
    out += struct.pack("<Q", len(blob)) + blob
    out += struct.pack("<I", len(arrays))
    for name, arr in sorted(arrays.items()):
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in DTYPES:
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} has non-finite values")
        key = name.encode()
        out += struct.pack("<I", len(key)) + key
        out += struct.pack("<BI", DTYPES[arr.dtype], arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += arr.astype(arr.dtype.newbyteorder("<")).tobytes()
    out += MAGIC_TAIL
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(out))
    tmp.replace(path)


def hf_to_openai(sd, layers):
    """Rename a Hugging Face CLIPVisionModelWithProjection state dict."""
    v = "vision_model."
    out = {
        "visual.conv1.weight": sd[v + "embeddings.patch_embedding.weight"],
        "visual.class_embedding": sd[v + "embeddings.class_embedding"],
        "visual.positional_embedding": sd[v + "embeddings.position_embedding.weight"],
        # sic: the HF module really is called pre_layrnorm
        "visual.ln_pre.weight": sd[v + "pre_layrnorm.weight"],
        "visual.ln_pre.bias": sd[v + "pre_layrnorm.bias"],
        "visual.ln_post.weight": sd[v + "post_layernorm.weight"],
        "visual.ln_post.bias": sd[v + "post_layernorm.bias"],
        "visual.proj": sd["visual_projection.weight"].T,
    }
    for i in range(layers):
        src = f"{v}encoder.layers.{i}."
        dst = f"visual.transformer.resblocks.{i}."
        out[dst + "attn.in_proj_weight"] = np.concatenate(
            [sd[src + f"self_attn.{p}_proj.weight"] for p in "qkv"], axis=0)
        out[dst + "attn.in_proj_bias"] = np.concatenate(
            [sd[src + f"self_attn.{p}_proj.bias"] for p in "qkv"], axis=0)
        pairs = {
            "attn.out_proj": "self_attn.out_proj",
            "ln_1": "layer_norm1",
            "ln_2": "layer_norm2",
            "mlp.c_fc": "mlp.fc1",
            "mlp.c_proj": "mlp.fc2",
        }
        for d, s in pairs.items():
            out[dst + d + ".weight"] = sd[src + s + ".weight"]
            out[dst + d + ".bias"] = sd[src + s + ".bias"]
    return out


def vit_config(conv, pos, proj, layers):
    width, _, patch, _ = conv.shape
    grid = int(round((pos.shape[0] - 1) ** 0.5))
    return {
        "image_size": grid * patch,
        "patch_size": patch,
        "width": width,
        "layers": layers,
        "heads": width // 64,
        "embed_dim": proj.shape[1],
    }


def convert_clip(args):
    if args.state_dict:
        import torch

        obj = torch.load(args.state_dict, map_location="cpu")
        if hasattr(obj, "state_dict"):
            obj = obj.state_dict()
        sd = {k: t.float().numpy() for k, t in obj.items() if k.startswith("visual.")}
        layers = len({k.split(".")[3] for k in sd if k.startswith("visual.transformer.resblocks.")})
        heads = args.heads
    else:
        from transformers import CLIPVisionModelWithProjection

        model = CLIPVisionModelWithProjection.from_pretrained(args.model)
        if model.config.hidden_act != "quick_gelu":
            sys.exit(f"unsupported activation {model.config.hidden_act}; the encoder implements quick_gelu")
        raw = {k: t.detach().float().numpy() for k, t in model.state_dict().items()}
        layers = model.config.num_hidden_layers
        heads = model.config.num_attention_heads
        sd = hf_to_openai(raw, layers)
    cfg = vit_config(sd["visual.conv1.weight"], sd["visual.positional_embedding"], sd["visual.proj"], layers)
    if heads:
        cfg["heads"] = heads
    meta = {"vit": cfg, "encoder_id": args.encoder_id, "source": args.state_dict or args.model}
    write_archive(args.out, meta, {k: np.asarray(a, dtype=np.float32) for k, a in sd.items()})
    print(f"wrote {args.out}: {cfg}")


def convert_vgg(args):
    import torchvision

    model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    sd = model.state_dict()
    arrays = {}
    for i in VGG_CONVS:
        for part in ("weight", "bias"):
            arrays[f"features.{i}.{part}"] = sd[f"features.{i}.{part}"].float().numpy()
    write_archive(args.out, {"source": "torchvision vgg19 IMAGENET1K_V1"}, arrays)
    print(f"wrote {args.out}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="what", required=True)
    clip = sub.add_parser("clip", help="CLIP image tower")
    clip.add_argument("--model", default="openai/clip-vit-base-patch32", help="Hugging Face model id or path")
    clip.add_argument("--state-dict", help="OpenAI-format checkpoint instead of a Hugging Face model")
    clip.add_argument("--heads", type=int, help="attention heads (default width / 64)")
    clip.add_argument("--encoder-id", default="clip-vit-b32")
    clip.add_argument("--out", required=True)
    vgg = sub.add_parser("vgg", help="VGG-19 feature stack up to relu3_4")
    vgg.add_argument("--out", required=True)
    args = ap.parse_args()
    (convert_clip if args.what == "clip" else convert_vgg)(args)


if __name__ == "__main__":
    main()
