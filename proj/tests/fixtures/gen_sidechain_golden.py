#!/usr/bin/env python3
"""Writes sidechain_golden.txt: one hex SHA-256 per block of the reference chain."""
import hashlib
import struct
from pathlib import Path

BLOCKS = [
    # (miner, origin, records)
    (4, 0, [(1, 0, 0.75, 0.625, 3, 1, 10, 7, 1.0),
            (2, 0, 0.25, 0.5, 0, 2, 10, 7, 0.5)]),
    (5, 1, [(1, 1, 0.5, 0.6, 4, 1, 3, 7, 0.8)]),
    (4, 2, []),
]


def payload(index, miner, origin, prev, records):
    out = struct.pack("<QII", index, miner, origin) + prev + struct.pack("<I", len(records))
    for u, c, lt, gt, t, f, L, N, F in records:
        out += struct.pack("<IIddQQQQd", u, c, lt, gt, t, f, L, N, F)
    return out


def main():
    prev = bytes(32)
    lines = []
    for i, (miner, origin, recs) in enumerate(BLOCKS):
        h = hashlib.sha256(payload(i, miner, origin, prev, recs)).digest()
        lines.append(h.hex())
        prev = h
    Path(__file__).with_name("sidechain_golden.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
