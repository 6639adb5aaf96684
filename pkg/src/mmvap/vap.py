"""256-state voice activity projection labels.

Bit layout: ``index = sum(bit[s, b] << (4 * s + b))`` with speaker 0 = A and
bins b = 0..3 covering 0-200, 200-600, 600-1200 and 1200-2000 ms.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import InvalidDistribution, OutOfRange, SessionTooShort, WrongLength
from .va import DyadVa

N_STATES = 256
BIN_FRAMES = (10, 20, 30, 40)
HORIZON = sum(BIN_FRAMES)
BIN_OFFSETS = tuple(int(x) for x in np.cumsum((0,) + BIN_FRAMES[:-1]))

_STATE_BITS = ((np.arange(N_STATES)[:, None] >> np.arange(8)) & 1).astype(bool)


def bin_frame_counts() -> list[int]:
    return list(BIN_FRAMES)


def bits_to_index(bits) -> int:
    bits = np.asarray(bits, dtype=bool).reshape(2, 4)
    return int(sum(int(bits[s, b]) << (4 * s + b) for s in range(2) for b in range(4)))


def decode_state(index: int) -> np.ndarray:
    if not 0 <= index < N_STATES:
        raise OutOfRange(f"state index {index} outside 0..255")
    return _STATE_BITS[index].reshape(2, 4).copy()


def _bin_bits(future: np.ndarray) -> np.ndarray:
    """(..., 100) activity -> (..., 4) bin bits; ties at half count as speech."""
    out = []
    for off, size in zip(BIN_OFFSETS, BIN_FRAMES):
        count = future[..., off:off + size].sum(axis=-1)
        out.append(2 * count >= size)
    return np.stack(out, axis=-1)


def encode_window(future_a, future_b) -> int:
    fa, fb = np.asarray(future_a), np.asarray(future_b)
    if fa.shape != (HORIZON,) or fb.shape != (HORIZON,):
        raise WrongLength(f"need {HORIZON} frames per speaker, got {fa.shape} and {fb.shape}")
    return bits_to_index(np.stack([_bin_bits(fa), _bin_bits(fb)]))


def labels_for_session(dyad: DyadVa) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame state index and validity mask.

    The label at frame t encodes frames t+1 .. t+100.  Frames without a full
    two-second future are masked out (their index is set to 0).
    """
    va = dyad.stacked().astype(np.int32)
    n = va.shape[1]
    if n < HORIZON:
        raise SessionTooShort(f"session has {n} frames, need at least {HORIZON}")
    csum = np.concatenate([np.zeros((2, 1), np.int32), np.cumsum(va, axis=1)], axis=1)
    n_valid = max(n - HORIZON, 0)
    t = np.arange(n_valid)
    index = np.zeros(n, dtype=np.int64)
    for b, (off, size) in enumerate(zip(BIN_OFFSETS, BIN_FRAMES)):
        lo = t + 1 + off
        counts = csum[:, lo + size] - csum[:, lo]
        bits = 2 * counts >= size
        index[:n_valid] += bits[0].astype(np.int64) << b
        index[:n_valid] += bits[1].astype(np.int64) << (4 + b)
    mask = np.zeros(n, dtype=bool)
    mask[:n_valid] = True
    return index, mask


def swap_speakers_index(index):
    """State index after exchanging the roles of A and B."""
    index = np.asarray(index)
    return ((index & 0x0F) << 4) | (index >> 4)


SPEAKER_PERMUTATION = swap_speakers_index(np.arange(N_STATES))


def shift_state_mask(active: str) -> np.ndarray:
    """Boolean mask over states where the non-active speaker fills bins 2 and 3."""
    other = {"a": 1, "b": 0}[active]
    return _STATE_BITS[:, 4 * other + 2] & _STATE_BITS[:, 4 * other + 3]


def validate_distribution(probs, atol: float = 1e-6) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.shape[-1] != N_STATES:
        raise InvalidDistribution(f"expected {N_STATES} probabilities, got {p.shape[-1]}")
    if (p < 0).any() or not np.allclose(p.sum(axis=-1), 1.0, atol=atol, rtol=0):
        raise InvalidDistribution("probabilities must be non-negative and sum to 1")
    return p


def shift_probability(dist, active: str):
    """Marginal probability that the currently silent speaker takes 600-2000 ms.

    Works on a single distribution or on a (frames, 256) array.
    """
    p = validate_distribution(dist)
    return p[..., shift_state_mask(active)].sum(axis=-1)


_LABEL_MAGIC = b"VAPL"


def dump_labels(index: np.ndarray, mask: np.ndarray) -> bytes:
    """Label dump: magic, uint32 frame count, one byte per frame, packed mask bits."""
    index = np.asarray(index)
    if len(index) != len(mask):
        raise WrongLength("index and mask lengths differ")
    return (_LABEL_MAGIC + struct.pack("<I", len(index))
            + index.astype(np.uint8).tobytes()
            + np.packbits(np.asarray(mask, bool), bitorder="little").tobytes())


def load_labels(blob: bytes) -> tuple[np.ndarray, np.ndarray]:
    if blob[:4] != _LABEL_MAGIC:
        raise InvalidDistribution("not a label dump")
    (n,) = struct.unpack("<I", blob[4:8])
    index = np.frombuffer(blob[8:8 + n], dtype=np.uint8).astype(np.int64)
    mask = np.unpackbits(np.frombuffer(blob[8 + n:], dtype=np.uint8),
                         bitorder="little")[:n].astype(bool)
    return index, mask
