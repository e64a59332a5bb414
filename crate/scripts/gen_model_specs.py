#!/usr/bin/env python3
"""Writes the bundled model specs under data/models/.

Only weight matmuls are listed (linear and dense convolutions). Depthwise
convolutions, attention score/value products, normalization and pooling are not
representable and are omitted. A layer is marked prunable only when both weight
dimensions are multiples of 32, so every block size up to 32x32 and every N:M
group up to 32 applies to all prunable layers. Classifier heads have 100 outputs.
"""
import json
import math
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "models")
CLASSES = 100


class Builder:
    def __init__(self, name):
        self.name = name
        self.layers = []

    def _add(self, layer, m, k):
        layer["prunable"] = m % 32 == 0 and k % 32 == 0
        self.layers.append(layer)

    def conv(self, id, c_in, c_out, k, stride, pad, hw):
        self._add(dict(id=id, kind="conv", c_in=c_in, c_out=c_out, kernel_h=k, kernel_w=k,
                       stride=stride, padding=pad, in_h=hw, in_w=hw), c_out, c_in * k * k)
        return (hw + 2 * pad - k) // stride + 1

    def linear(self, id, i, o, tokens):
        self._add(dict(id=id, kind="linear", in_features=i, out_features=o,
                       tokens_per_sample=tokens), o, i)

    def write(self):
        path = os.path.join(OUT, f"{self.name}.json")
        with open(path, "w") as f:
            json.dump(dict(name=self.name, batch=1, layers=self.layers), f, indent=1)
            f.write("\n")


def resnet50():
    b = Builder("resnet50")
    hw = b.conv("stem", 3, 64, 7, 2, 3, 224)
    hw = (hw + 2 - 3) // 2 + 1  # max pool
    c = 64
    for s, (width, blocks) in enumerate([(64, 3), (128, 4), (256, 6), (512, 3)], 1):
        for i in range(blocks):
            stride = 2 if (i == 0 and s > 1) else 1
            p = f"layer{s}.{i}"
            b.conv(f"{p}.conv1", c, width, 1, 1, 0, hw)
            out = b.conv(f"{p}.conv2", width, width, 3, stride, 1, hw)
            b.conv(f"{p}.conv3", width, width * 4, 1, 1, 0, out)
            if i == 0:
                b.conv(f"{p}.downsample", c, width * 4, 1, stride, 0, hw)
            c, hw = width * 4, out
    b.linear("fc", c, CLASSES, 1)
    b.write()


def efficientnet_b4():
    width, depth, res = 1.4, 1.8, 380

    def filters(ch):
        v = ch * width
        new = max(8, int(v + 4) // 8 * 8)
        if new < 0.9 * v:
            new += 8
        return new

    b = Builder("efficientnet_b4")
    stem = filters(32)
    hw = b.conv("stem", 3, stem, 3, 2, 1, res)
    c = stem
    cfg = [(1, 3, 1, 16, 1), (6, 3, 2, 24, 2), (6, 5, 2, 40, 2), (6, 3, 2, 80, 3),
           (6, 5, 1, 112, 3), (6, 5, 2, 192, 4), (6, 3, 1, 320, 1)]
    for s, (expand, k, stride, out_base, repeats) in enumerate(cfg):
        out_c = filters(out_base)
        for i in range(int(math.ceil(depth * repeats))):
            p = f"blocks.{s}.{i}"
            st = stride if i == 0 else 1
            mid = c * expand
            if expand != 1:
                b.conv(f"{p}.expand", c, mid, 1, 1, 0, hw)
            out_hw = (hw + 2 * (k // 2) - k) // st + 1  # depthwise, not listed
            se = max(1, int(c * 0.25))
            b.linear(f"{p}.se_reduce", mid, se, 1)
            b.linear(f"{p}.se_expand", se, mid, 1)
            b.conv(f"{p}.project", mid, out_c, 1, 1, 0, out_hw)
            c, hw = out_c, out_hw
    head = filters(1280)
    b.conv("head", c, head, 1, 1, 0, hw)
    b.linear("classifier", head, CLASSES, 1)
    b.write()


def convnext_tiny():
    b = Builder("convnext_tiny")
    dims, depths = [96, 192, 384, 768], [3, 3, 9, 3]
    hw = b.conv("stem", 3, dims[0], 4, 4, 0, 224)
    for s, (d, n) in enumerate(zip(dims, depths)):
        if s > 0:
            hw = b.conv(f"downsample.{s}", dims[s - 1], d, 2, 2, 0, hw)
        for i in range(n):
            b.linear(f"stages.{s}.{i}.pwconv1", d, 4 * d, hw * hw)
            b.linear(f"stages.{s}.{i}.pwconv2", 4 * d, d, hw * hw)
    b.linear("head", dims[-1], CLASSES, 1)
    b.write()


def deit_small():
    b = Builder("deit_small")
    d, tokens = 384, 197
    b.conv("patch_embed", 3, d, 16, 16, 0, 224)
    for i in range(12):
        b.linear(f"blocks.{i}.attn.qkv", d, 3 * d, tokens)
        b.linear(f"blocks.{i}.attn.proj", d, d, tokens)
        b.linear(f"blocks.{i}.mlp.fc1", d, 4 * d, tokens)
        b.linear(f"blocks.{i}.mlp.fc2", 4 * d, d, tokens)
    b.linear("head", d, CLASSES, 1)
    b.write()


def swin_tiny():
    b = Builder("swin_tiny")
    dims, depths = [96, 192, 384, 768], [2, 2, 6, 2]
    hw = b.conv("patch_embed", 3, dims[0], 4, 4, 0, 224)
    for s, (d, n) in enumerate(zip(dims, depths)):
        tokens = hw * hw
        for i in range(n):
            p = f"layers.{s}.blocks.{i}"
            b.linear(f"{p}.attn.qkv", d, 3 * d, tokens)
            b.linear(f"{p}.attn.proj", d, d, tokens)
            b.linear(f"{p}.mlp.fc1", d, 4 * d, tokens)
            b.linear(f"{p}.mlp.fc2", 4 * d, d, tokens)
        if s < 3:
            hw //= 2
            b.linear(f"layers.{s}.downsample", 4 * d, 2 * d, hw * hw)
    b.linear("head", dims[-1], CLASSES, 1)
    b.write()


def mixer_small():
    b = Builder("mixer_small")
    d, tokens, tok_hidden, ch_hidden = 512, 196, 256, 2048
    b.conv("stem", 3, d, 16, 16, 0, 224)
    for i in range(8):
        # token mixing runs along the patch axis, once per channel
        b.linear(f"blocks.{i}.mlp_tokens.fc1", tokens, tok_hidden, d)
        b.linear(f"blocks.{i}.mlp_tokens.fc2", tok_hidden, tokens, d)
        b.linear(f"blocks.{i}.mlp_channels.fc1", d, ch_hidden, tokens)
        b.linear(f"blocks.{i}.mlp_channels.fc2", ch_hidden, d, tokens)
    b.linear("head", d, CLASSES, 1)
    b.write()


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    for gen in (resnet50, efficientnet_b4, convnext_tiny, deit_small, swin_tiny, mixer_small):
        gen()
