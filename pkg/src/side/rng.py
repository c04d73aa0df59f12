"""Portable, documented random number generation.

All randomness in the package comes from :class:`PortableRng`:

* **Seeding** is SplitMix64. A stream is named by ``(seed, label)``; the
  label is hashed with 64-bit FNV-1a and xor-ed into the seed, and four
  consecutive SplitMix64 outputs ``s0..s3`` give the PCG64 state
  ``(s0 << 64) | s1`` and increment ``((s2 << 64) | s3) | 1``.
* **Raw output** is PCG64 (128-bit LCG with multiplier
  0x2360ED051FC65DA44385DF649FCCF645, XSL-RR output permutation). numpy's
  ``PCG64`` bit generator implements exactly this update, so we only use
  its ``random_raw`` method and set its state by hand.
* **Uniforms** on [0, 1): ``(raw >> 11) * 2**-53``.
* **Normals**: Box-Muller. Uniform pairs ``(u1, u2)`` map to
  ``sqrt(-2 ln(1 - u1)) * (cos 2*pi*u2, sin 2*pi*u2)``, emitted in that order.
* **Integers** in [0, n): ``floor(u * n)``.
* **Permutations**: Fisher-Yates, i = n-1 .. 1, swap i with ``floor(u * (i+1))``.
* **Gamma(k)**: Marsaglia-Tsang for k >= 1; for k < 1 draw Gamma(k+1) and
  multiply by ``u ** (1/k)``. **Beta(a, b)** = X / (X + Y) with independent
  gammas X ~ Gamma(a), Y ~ Gamma(b).

Any implementation of the same steps reproduces the same streams.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step. Returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


class PortableRng:
    def __init__(self, seed: int, label: str = ""):
        self.seed = int(seed)
        self.label = label
        state = (self.seed & MASK64) ^ fnv1a64(label)
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._bits = np.random.PCG64()
        self._bits.state = {
            "bit_generator": "PCG64",
            "state": {
                "state": (words[0] << 64) | words[1],
                "inc": ((words[2] << 64) | words[3]) | 1,
            },
            "has_uint32": 0,
            "uinteger": 0,
        }

    def substream(self, label: str) -> "PortableRng":
        """Independent stream keyed by the parent's seed and a joined label."""
        return PortableRng(self.seed, f"{self.label}/{label}")

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        if low == 0.0 and high == 1.0:
            return u
        return low + (high - low) * u

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * np.pi * u[:, 1]
        z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).reshape(-1)
        return sigma * z[:n]

    def integers(self, n: int, high: int) -> np.ndarray:
        return np.floor(self.uniform(n) * high).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for step, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[step] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def gamma(self, shape: float) -> float:
        if shape <= 0:
            raise ValueError("gamma shape must be positive")
        if shape < 1.0:
            boost = self.uniform(1)[0] ** (1.0 / shape)
            return self.gamma(shape + 1.0) * boost
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal(1)[0]
            v = (1.0 + c * x) ** 3
            if v <= 0:
                continue
            u = self.uniform(1)[0]
            if math.log1p(-u) < 0.5 * x * x + d - d * v + d * math.log(v):
                return d * v

    def beta(self, a: float, b: float, n: int) -> np.ndarray:
        out = np.empty(n)
        for i in range(n):
            x = self.gamma(a)
            y = self.gamma(b)
            out[i] = x / (x + y)
        return out
