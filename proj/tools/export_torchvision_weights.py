# Copyright 2026 The FARNet Authors
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

"""Export torchvision backbone weights to a FARNet tensor archive (.fnta).

    python export_torchvision_weights.py --arch densenet121 --out densenet121.fnta
    python export_torchvision_weights.py --arch resnet101 --out r101.fnta --random --seed 3

Tensor names are the torchvision state_dict keys without the classifier head
and without BatchNorm's num_batches_tracked counters.
"""

import argparse
import json
import struct

import numpy as np
import torch
import torchvision

ARCHS = ("densenet121", "densenet169", "resnet101", "resnet152", "vgg16", "vgg19")
MAGIC = b"FNTA"
VERSION = 1


def write_fnta(path, tensors, meta=None):
    """tensors: iterable of (name, array-like). Stored as float32."""
    entries, blobs, offset = [], [], 0
    for name, value in tensors:
        a = np.ascontiguousarray(np.asarray(value, dtype=np.float32))
        entries.append({"name": name, "dims": list(a.shape), "offset": offset, "count": int(a.size)})
        blobs.append(a.tobytes())
        offset += a.size
    header = json.dumps({"meta": meta or {}, "tensors": entries}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)


def read_fnta(path):
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path} is not a tensor archive")
        version, n = struct.unpack("<IQ", f.read(12))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        header = json.loads(f.read(n))
        payload = np.frombuffer(f.read(), dtype="<f4")
    out = {}
    for e in header["tensors"]:
        out[e["name"]] = payload[e["offset"]:e["offset"] + e["count"]].reshape(e["dims"])
    return header["meta"], out


def build(arch, pretrained):
    ctor = getattr(torchvision.models, arch)
    return ctor(weights="DEFAULT" if pretrained else None).eval()


def randomize_batchnorm(model, generator):
    """Non-trivial statistics so inference-mode normalization is exercised."""
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, torch.nn.BatchNorm2d):
                c = m.num_features
                m.running_mean.copy_(0.1 * torch.randn(c, generator=generator))
                m.running_var.copy_(0.5 + torch.rand(c, generator=generator))
                m.weight.copy_(0.5 + torch.rand(c, generator=generator))
                m.bias.copy_(0.1 * torch.randn(c, generator=generator))


def backbone_tensors(model):
    skip = ("classifier.", "fc.")
    for name, t in model.state_dict().items():
        if name.endswith("num_batches_tracked") or name.startswith(skip):
            continue
        yield name, t.detach().cpu().numpy()


def export(model, arch, path, source):
    write_fnta(path, backbone_tensors(model), {"arch": arch, "source": source})


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--arch", choices=ARCHS, required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--random", action="store_true", help="random initialization instead of ImageNet weights")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    model = build(args.arch, pretrained=not args.random)
    if args.random:
        randomize_batchnorm(model, torch.Generator().manual_seed(args.seed))
    export(model, args.arch, args.out, "random" if args.random else "torchvision-imagenet")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
