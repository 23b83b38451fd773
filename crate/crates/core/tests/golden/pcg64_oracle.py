"""Reference draws for SeededRng, produced with numpy's PCG64 bit generator.

Run from this directory: python3 pcg64_oracle.py > rng.json
"""
import json
import math
import struct

import numpy as np

M128 = (1 << 128) - 1
MULT = 0x2360ED051FC65DA44385DF649FCCF645
STREAM = 0xA02BDBF7BB3C0A7AC28FA16A64ABF96B


def generator(seed):
    inc = ((STREAM << 1) | 1) & M128
    state = (((seed + inc) & M128) * MULT + inc) & M128
    bg = np.random.PCG64()
    bg.state = {
        "bit_generator": "PCG64",
        "state": {"state": state, "inc": inc},
        "has_uint32": 0,
        "uinteger": 0,
    }
    return bg


def bits(x):
    return str(struct.unpack("<Q", struct.pack("<d", x))[0])


def uniform(raw):
    return (raw >> 11) * (1.0 / (1 << 53))


def draws(seed):
    bg = generator(seed)
    raw = [int(x) for x in bg.random_raw(8)]
    bg = generator(seed)
    uniforms = [uniform(int(x)) for x in bg.random_raw(8)]
    bg = generator(seed)
    gauss = []
    it = iter(int(x) for x in bg.random_raw(8))
    for a, b in zip(it, it):
        u1 = ((a >> 11) + 1) * (1.0 / (1 << 53))
        u2 = uniform(b)
        r = math.sqrt(-2.0 * math.log(u1))
        t = 2.0 * math.pi * u2
        gauss += [r * math.cos(t), r * math.sin(t)]
    return {
        "seed": seed,
        "u64": [str(x) for x in raw],
        "f64_bits": [bits(x) for x in uniforms],
        "gaussian_bits": [bits(x) for x in gauss],
    }


print(json.dumps([draws(s) for s in (0, 1, 42, 2**64 - 1)], indent=1))
