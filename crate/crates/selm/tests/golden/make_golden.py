#!/usr/bin/env python3
"""Writes the golden ciphertext and dataset files with struct.pack.

Run from this directory: python3 make_golden.py
"""
import struct

PROMPTS = [
    (b"123e4567-e89b-42d3-a456-426614174000", 92),
    (b"00000000-0000-4000-8000-000000000000", 7),
]
THETA = [0.5, -1.25, 3.0517578125e-05, 1.0e30, -0.0]


def ciphertext():
    out = b"SELM" + struct.pack("<BB", 1, 2)
    out += bytes(range(32))
    out += struct.pack("<IQH", len(THETA), 0x0123456789ABCDEF, len(PROMPTS))
    for prompt, count in PROMPTS:
        out += struct.pack("<H", len(prompt)) + prompt + struct.pack("<I", count)
    out += struct.pack("<%df" % len(THETA), *THETA)
    return out


RECORDS = [
    (0, [1.0, 2.0, 3.0]),
    (1, [-1.0, 0.25, 1.0e-3]),
    (0, [0.0, -0.0, 65504.0]),
    (1, [7.5, -7.5, 1.0e-20]),
]


def dataset():
    out = b"SLDS" + struct.pack("<BII", 1, 3, len(RECORDS))
    for label, theta in RECORDS:
        out += struct.pack("<B3f", label, *theta)
    return out


with open("ciphertext.selm", "wb") as f:
    f.write(ciphertext())
with open("dataset.slds", "wb") as f:
    f.write(dataset())
