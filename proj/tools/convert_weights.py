#!/usr/bin/env python3
# Copyright 2026 The codi-iqa Authors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Convert a PyTorch backbone state dict into a codi backbone checkpoint.

Accepts a torchvision ResNet-50 or timm Swin-B state dict (.pth/.pt, either a
bare state dict or a dict holding one under "state_dict"/"model"). Classifier
heads, the final transformer norm, num_batches_tracked counters and derived
buffers (relative_position_index, attn_mask) are dropped.

    convert_weights.py dae.pth dae.ckpt --backbone resnet50 \
        --provenance pretrained-distortion
"""

import argparse
import json
import struct
import sys

MAGIC = b"CODICKPT"
FORMAT_VERSION = 1

_DROP_SUFFIXES = ("num_batches_tracked", "relative_position_index", "attn_mask")
_DROP_PREFIXES = ("fc.", "head.", "norm.")


def _fnv1a(data: bytes) -> int:
    h = 1469598103934665603
    for b in data:
        h ^= b
        h = (h * 1099511628211) & 0xFFFFFFFFFFFFFFFF
    return h


def write_checkpoint(path, manifest, tensors):
    """tensors: dict name -> numpy float array. Written as float32."""
    import numpy as np

    manifest = dict(manifest)
    manifest["format_version"] = FORMAT_VERSION
    manifest["dtype"] = "float32"
    entries, payload, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "numel": int(arr.size)})
        payload.append(arr.tobytes())
        offset += arr.nbytes
    manifest["tensors"] = entries
    text = json.dumps(manifest, separators=(",", ":")).encode()
    body = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(text)) + text + b"".join(payload)
    # FNV-1a over ~100 MB in pure Python is slow; chunk through numpy instead.
    digest = _fnv1a_fast(body)
    with open(path, "wb") as f:
        f.write(body)
        f.write(struct.pack("<Q", digest))


def _fnv1a_fast(data: bytes) -> int:
    try:
        import numba  # noqa: F401
    except ImportError:
        return _fnv1a(data)
    import numpy as np
    from numba import njit

    @njit(cache=False)
    def run(buf):
        h = np.uint64(1469598103934665603)
        p = np.uint64(1099511628211)
        for b in buf:
            h = (h ^ np.uint64(b)) * p
        return h

    return int(run(np.frombuffer(data, dtype=np.uint8)))


def convert_state_dict(state):
    out = {}
    for name, value in state.items():
        if name.endswith(_DROP_SUFFIXES) or name.startswith(_DROP_PREFIXES):
            continue
        out[name] = value.detach().cpu().float().numpy()
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("source", help="PyTorch state dict file")
    ap.add_argument("output", help="destination .ckpt")
    ap.add_argument("--backbone", choices=["resnet50", "swin_base"], required=True)
    ap.add_argument("--provenance", choices=["pretrained-content", "pretrained-distortion", "random-seeded"],
                    required=True)
    ap.add_argument("--mean", type=float, nargs=3, default=[0.485, 0.456, 0.406])
    ap.add_argument("--std", type=float, nargs=3, default=[0.229, 0.224, 0.225])
    args = ap.parse_args(argv)

    import torch

    state = torch.load(args.source, map_location="cpu", weights_only=True)
    for key in ("state_dict", "model"):
        if isinstance(state, dict) and key in state and isinstance(state[key], dict):
            state = state[key]
    manifest = {
        "kind": "backbone",
        "provenance": args.provenance,
        "backbone_id": args.backbone,
        "normalization": {"mean": args.mean, "std": args.std},
    }
    tensors = convert_state_dict(state)
    write_checkpoint(args.output, manifest, tensors)
    print(f"wrote {len(tensors)} tensors to {args.output}", file=sys.stderr)


if __name__ == "__main__":
    main()
