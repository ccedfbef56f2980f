"""Writes golden model encodings and their Merkle roots.

Independent of the Rust code: built from the documented byte layout with
Python's struct and hashlib.
"""
import hashlib
import struct

Q = 1 << 16


def fx(x):
    v = round(x * Q)
    assert float(v) / Q == x
    return struct.pack("<i", v)


def header(arch, dim, labels):
    return b"FAIRM1" + bytes([arch]) + struct.pack("<II", dim, labels)


def linear(weights, biases):
    dim, labels = len(weights[0]), len(weights)
    out = header(1, dim, labels)
    for w, b in zip(weights, biases):
        out += b"".join(fx(x) for x in w) + fx(b)
    return out


def lookup(dim, labels, default, entries):
    out = header(2, dim, labels) + struct.pack("<Ii", len(entries), default)
    for key, label in sorted(entries, key=lambda e: [round(x * Q) for x in e[0]]):
        out += b"".join(fx(x) for x in key) + struct.pack("<i", label)
    return out


def wrapper(inner, dim, labels, rates_micro, seed):
    out = header(3, dim, labels) + inner
    out += b"".join(struct.pack("<I", r) for r in rates_micro)
    return out + struct.pack("<Q", seed)


def h(b):
    return hashlib.sha3_256(b).digest()


def merkle(data):
    chunks = [data[i:i + 64].ljust(64, b"\0") for i in range(0, len(data), 64)]
    level = [h(b"\0" + c) for c in chunks] + [h(b"\0" + struct.pack("<Q", len(data)))]
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            pair = level[i:i + 2]
            nxt.append(h(b"\1" + pair[0] + pair[1]) if len(pair) == 2 else pair[0])
        level = nxt
    return level[0]


argmax = linear([[1, 0, 0, 0], [0, 1, 0, 0]], [0, 0])
models = {
    "linear": linear([[1.5, -2.0, 0.25], [0.0, 0.5, -1.0]], [0.125, -3.0]),
    "lookup": lookup(2, 3, 2, [([1.0, 2.0], 0), ([-1.0, 0.0], 1)]),
    "wrapper": wrapper(argmax, 4, 2, [100_000, 250_000], 0x0123456789ABCDEF),
}
with open("golden_roots.txt", "w") as f:
    for name, data in models.items():
        with open(f"golden_{name}.bin", "wb") as m:
            m.write(data)
        f.write(f"{name} {len(data)} {merkle(data).hex()}\n")
