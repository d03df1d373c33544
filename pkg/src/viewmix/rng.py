"""Deterministic, splittable random streams.

Every stochastic choice in the project (weight init, shuffling, scene
scripting, corruption) draws from an `Rng`, which wraps the Philox-4x64-10
counter-based generator. All derived draws (uniforms, gaussians, integers,
shuffles) are computed here from the raw 64-bit output, so streams are
reproducible bit-for-bit across platforms and numpy versions.

Child streams are split by hashing a string label into a fresh Philox key,
so the draw order of one stream never affects another.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["Rng"]

_U53 = np.float64(1.0 / (1 << 53))


def _key_from(seed: int, label: str = "") -> int:
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(16, "little", signed=False))
    h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


class Rng:
    """A named Philox stream with stable derived draws.

    Same (seed, label path, draw sequence) always yields the same scalars.
    """

    def __init__(self, seed: int, _label: str = ""):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.label = _label
        self._bg = np.random.Philox(key=_key_from(seed, _label))

    def child(self, label: str) -> "Rng":
        """Split off an independent stream keyed by `label`."""
        return Rng(self.seed, self.label + "/" + label)

    # -- raw draws ---------------------------------------------------------

    def raw(self, n: int) -> np.ndarray:
        """`n` raw uint64 words straight from Philox."""
        return self._bg.random_raw(n)

    def uniform(self, n: int = 1, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniforms in [low, high) with 53-bit mantissas."""
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _U53
        return low + (high - low) * u

    def normal(self, n: int = 1, std: float = 1.0) -> np.ndarray:
        """Gaussians via Box-Muller (fixed algorithm, platform-stable)."""
        m = (n + 1) // 2
        u1 = (self.raw(m) >> np.uint64(11)).astype(np.float64) * _U53
        u2 = (self.raw(m) >> np.uint64(11)).astype(np.float64) * _U53
        r = np.sqrt(-2.0 * np.log1p(-u1))  # u1 in [0,1) => 1-u1 in (0,1]
        theta = 2.0 * np.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return out * std

    def integers(self, bound: int, n: int = 1) -> np.ndarray:
        """Unbiased integers in [0, bound) by rejection on the top bits."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        out = np.empty(n, dtype=np.int64)
        filled = 0
        # Rejection zone keeps the draw unbiased for any bound; a remainder
        # of zero means every word is acceptable.
        rem = (1 << 64) % bound
        limit = np.uint64((1 << 64) - rem - 1) if rem else None
        while filled < n:
            words = self.raw(max(n - filled, 8))
            take = words if limit is None else words[words <= limit]
            take = take % np.uint64(bound)
            k = min(len(take), n - filled)
            out[filled : filled + k] = take[:k].astype(np.int64)
            filled += k
        return out

    def choice(self, options, n: int = 1):
        idx = self.integers(len(options), n)
        return [options[int(i)] for i in idx]

    def shuffle(self, items: list) -> list:
        """Fisher-Yates with this stream; returns a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self.integers(i + 1)[0])
            out[i], out[j] = out[j], out[i]
        return out

    def __repr__(self):
        return f"Rng(seed={self.seed}, label={self.label!r})"
