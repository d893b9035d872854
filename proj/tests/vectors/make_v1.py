#!/usr/bin/env python3
"""Writes the v1 format fixtures with Python's struct module ('<' = little-endian).

The C++ writer is not involved, so these files pin the byte layout from the
outside. Values follow fixture_value(i), mirrored in test_io_format.cpp; all of
them are exact in binary32, so the float and double containers hold the same
numbers.

    python3 tests/vectors/make_v1.py tests/vectors/v1
"""
import os
import struct
import sys


def fnv1a64(data: bytes) -> int:
    h = 0xcbf29ce484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001b3) & 0xFFFFFFFFFFFFFFFF
    return h


def fixture_value(i: int) -> float:
    return ((i * 7919) % 1001 - 500) / 256.0


def container(d: int, count: int, width: int) -> bytes:
    fmt = "<f" if width == 4 else "<d"
    payload = b"".join(struct.pack(fmt, fixture_value(i)) for i in range(d * count))
    head = b"CNAN" + struct.pack("<IIQB", 1, d, count, width)
    return head + payload + struct.pack("<Q", fnv1a64(payload))


MANIFEST = """\
format_version: 1
d: 3
container: small_f64.cnan
templates:
  - id: s0-g0
    subject: s0
    distribution: gallery
    split: test
    rows: [0, 1]
  - id: s0-p0
    subject: s0
    distribution: probe
    split: test
    rows: [2, 3, 4]
    media: [clip/a, clip/b, clip/c]
    quality: [1, 0, ~]
"""

# d = 4, mean+var blocks (no attention), hidden widths 6 and 5, probe transform on.
TENSORS = [
    ("context.w1", [8, 6], "main"),
    ("context.b1", [6], "main"),
    ("context.w2", [6, 5], "main"),
    ("context.b2", [5], "main"),
    ("context.w3", [5, 4], "main"),
    ("context.b3", [4], "main"),
    ("probe.weight", [4, 4], "probe_transform"),
    ("probe.bias", [4], "probe_transform"),
]


def checkpoint() -> bytes:
    lines = [
        "format_version: 1",
        "model:",
        "  d: 4",
        "  heads: 2",
        "  hidden: [6, 5]",
        "  summary_blocks: [mean, var]",
        "  probe_transform: true",
        "  softmax_temperature: 0.25",
        "loss_temperature: 0.125",
        "provenance:",
        "  writer: make_v1.py",
        "tensors:",
    ]
    payload = b""
    i = 0
    for name, shape, group in TENSORS:
        n = 1
        for e in shape:
            n *= e
        lines.append(
            f"  - {{name: {name}, shape: [{', '.join(map(str, shape))}], offset: {len(payload)}, group: {group}}}"
        )
        for _ in range(n):
            payload += struct.pack("<d", fixture_value(i))
            i += 1
    header = ("\n".join(lines) + "\n").encode()
    body = header + payload
    return b"CNANCKPT" + struct.pack("<IQ", 1, len(header)) + body + struct.pack("<Q", fnv1a64(body))


def main() -> None:
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "v1")
    os.makedirs(out, exist_ok=True)
    files = {
        "small_f64.cnan": container(3, 5, 8),
        "small_f32.cnan": container(3, 5, 4),
        "empty.cnan": container(7, 0, 8),
        "manifest.yaml": MANIFEST.encode(),
        "model.ckpt": checkpoint(),
    }
    for name, data in files.items():
        with open(os.path.join(out, name), "wb") as f:
            f.write(data)


if __name__ == "__main__":
    main()
