"""Keyed, counter-based random streams.

Every Gaussian or uniform draw is addressed by ``(seed, tag, step, index)``:
``tag`` names the purpose of the stream (outer stubs, inner continuations,
chain thinning, ...), ``step`` is the absolute grid step (or thinning round)
and ``index`` is the logical path number.  Draws are produced in blocks of
``BLOCK`` paths by a Philox generator whose 128-bit key encodes
``(seed, tag, step, block)``, so the value seen by a given path never depends
on how many other paths are simulated, in which order, or on which thread.
"""

from __future__ import annotations

import zlib
from functools import lru_cache

import numpy as np

BLOCK = 1024


def stream_tag(name: str) -> int:
    """Stable 32-bit tag for a stream name (independent of ``PYTHONHASHSEED``)."""
    return zlib.crc32(name.encode("utf-8"))


@lru_cache(maxsize=4096)
def _mixed_seed(seed: int, tag: int) -> int:
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(tag)]).generate_state(1, np.uint64)
    return int(state[0])


def _block_generator(seed: int, tag: int, step: int, block: int) -> np.random.Generator:
    if step < 0 or step >= 2**31 or block >= 2**32:
        raise ValueError(f"stream coordinates out of range: step={step}, block={block}")
    key = np.array([_mixed_seed(seed, tag), (step << 32) | block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _blocks(start: int, count: int):
    first = start // BLOCK
    last = (start + count - 1) // BLOCK
    return range(first, last + 1)


def normals(seed: int, tag: int, step: int, start: int, count: int, antithetic: bool = False) -> np.ndarray:
    """Standard normals for paths ``start .. start+count-1`` at ``step``.

    With ``antithetic`` the paths come in pairs ``(2m, 2m+1)`` carrying
    ``(z, -z)``.
    """
    if count <= 0:
        return np.empty(0)
    out = []
    for b in _blocks(start, count):
        gen = _block_generator(seed, tag, step, b)
        if antithetic:
            z = gen.standard_normal(BLOCK // 2)
            blk = np.empty(BLOCK)
            blk[0::2] = z
            blk[1::2] = -z
        else:
            blk = gen.standard_normal(BLOCK)
        out.append(blk)
    flat = np.concatenate(out)
    offset = start - _blocks(start, count)[0] * BLOCK
    return flat[offset:offset + count]


def uniforms(seed: int, tag: int, step: int, start: int, count: int) -> np.ndarray:
    """Uniforms on [0, 1) addressed like :func:`normals`."""
    if count <= 0:
        return np.empty(0)
    out = [_block_generator(seed, tag, step, b).random(BLOCK) for b in _blocks(start, count)]
    flat = np.concatenate(out)
    offset = start - _blocks(start, count)[0] * BLOCK
    return flat[offset:offset + count]


def mean_and_se(samples: np.ndarray, antithetic: bool = False, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error along ``axis``.

    Antithetic samples are averaged pairwise first, since the members of a
    pair are not independent.
    """
    x = np.moveaxis(np.asarray(samples, dtype=float), axis, -1)
    if antithetic and x.shape[-1] % 2 == 0 and x.shape[-1] >= 4:
        x = 0.5 * (x[..., 0::2] + x[..., 1::2])
    n = x.shape[-1]
    mean = x.mean(axis=-1)
    if n < 2:
        return mean, np.zeros_like(mean)
    se = x.std(axis=-1, ddof=1) / np.sqrt(n)
    return mean, se
