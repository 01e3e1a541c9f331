"""Counter-based random streams with order-independent site addressing.

Every random quantity in the package is a pure function of a 64-bit seed
plus a stream tag.  Site-indexed draws come from a Philox stream in which
word ``i`` belongs to the site with canonical index ``i``; arbitrary index
windows are reachable in O(1) via the counter, so chunked, lazy, and
filtered evaluation all see bit-identical values.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# stream tags; distinct tags give independent streams for the same seed
TAG_SITE_VALUES = 0x51
TAG_SPARSE = 0x5B
TAG_ENSEMBLE = 0xE5


def _philox(*entropy: int) -> np.random.Philox:
    ss = np.random.SeedSequence([e & _MASK64 for e in entropy])
    return np.random.Philox(seed=ss)


def generator(seed: int, tag: int, *rest: int) -> np.random.Generator:
    """A dedicated Generator for (seed, tag, ...); deterministic."""
    return np.random.Generator(_philox(seed, tag, *rest))


def site_words(seed: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit words ``start .. start+count-1`` of the site stream.

    Philox advances its counter in blocks of four 64-bit outputs, so the
    window is aligned down to a block boundary and the lead-in discarded.
    """
    bg = _philox(seed, TAG_SITE_VALUES)
    lead = start % 4
    if start - lead:
        bg.advance((start - lead) // 4)
    return bg.random_raw(count + lead)[lead:]


def site_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Open-interval uniforms for canonical site indices [start, start+count).

    Cell-midpoint construction ((w >> 11) + 0.5) * 2^-53 keeps the values
    strictly inside (0, 1), so -log stays finite and positive.
    """
    w = site_words(seed, start, count)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def site_exponentials(seed: int, start: int, count: int) -> np.ndarray:
    """Exp(1) draws for a canonical index window, via inverse CDF."""
    return -np.log(site_uniforms(seed, start, count))


def spawn_seed(master_seed: int, tag: int, index: int) -> int:
    """Derive a per-work-item 64-bit seed from a master seed."""
    ss = np.random.SeedSequence(
        [master_seed & _MASK64, tag & _MASK64, index & _MASK64]
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])
