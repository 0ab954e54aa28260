"""CHIRRUP: slotting, two-slot peeling and patching on top of chirp reconstruction.

A ``B``-bit message is cut into ``2**r`` patches.  Patch ``i`` carries its
share of the payload followed by ``l[i]`` parity bits computed from all
earlier payloads.  Each patch bit string becomes a codeword label plus a
primary slot; the codeword is sent in the primary slot (check digit 0) and
again in ``primary XOR translate`` (check digit 1) of the patch's sub-block.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .codebook import BitLayout, ChirpParams, Mode, encode_chirp
from .reconstruct import DecoderParams, chirp_reconstruct

DEFAULT_PARITY = {0: (0,), 1: (0, 15), 2: (0, 10, 10, 15)}


class Energy(str, enum.Enum):
    """How ``Q`` maps to transmitted amplitude.

    ``per_entry``: every chirp entry has power ``Q``, so one message carries
    ``2**(r+1) * 2**m * Q``.  ``per_message``: the chirps are scaled so one
    message carries ``n * Q`` in total, the energy that ``nQ/(2B)`` counts.
    """

    PER_ENTRY = "per_entry"
    PER_MESSAGE = "per_message"


def bits_key(bits: np.ndarray) -> bytes:
    return np.asarray(bits, dtype=np.uint8).tobytes()


@dataclass(frozen=True)
class CodeConfig:
    """Geometry and decoder constants of one CHIRRUP scheme.

    ``K_expected`` only sizes the per-slot iteration cap ``S`` when no
    explicit ``decoder`` is given; the decoder never needs the true K.
    """

    m: int
    p: int
    r: int = 0
    mode: Mode = Mode.COMPLEX
    l: Optional[tuple[int, ...]] = None
    Q: float = 1.0
    decoder: Optional[DecoderParams] = None
    d: int = 5
    K_expected: Optional[int] = None
    complex_tol: float = 0.3
    real_tol: float = 0.1
    parity_seed: int = 0
    energy: Energy = Energy.PER_MESSAGE

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "energy", Energy(self.energy))
        if self.l is None:
            if self.r not in DEFAULT_PARITY:
                raise ValueError(f"no default parity allocation for r={self.r}; pass l")
            object.__setattr__(self, "l", DEFAULT_PARITY[self.r])
        object.__setattr__(self, "l", tuple(int(x) for x in self.l))
        if self.r < 0:
            raise ValueError("r must be non-negative")
        if len(self.l) != 1 << self.r:
            raise ValueError(f"l needs {1 << self.r} entries for r={self.r}, got {len(self.l)}")
        if self.l[0] != 0:
            raise ValueError("the first patch carries no parity bits (l[0] must be 0)")
        if any(x < 0 or x > self.patch_bits for x in self.l):
            raise ValueError(f"parity counts must lie in [0, {self.patch_bits}]")
        if self.B < 1:
            raise ValueError(f"configuration carries B={self.B} information bits")
        if self.Q <= 0:
            raise ValueError("Q must be positive")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @cached_property
    def layout(self) -> BitLayout:
        return BitLayout(self.m, self.p, self.mode)

    @property
    def patch_bits(self) -> int:
        return self.layout.length

    @property
    def n_patches(self) -> int:
        return 1 << self.r

    @property
    def n_slots(self) -> int:
        return 1 << self.p

    @property
    def slot_len(self) -> int:
        return 1 << self.m

    @property
    def block_len(self) -> int:
        return 1 << (self.m + self.p)

    @property
    def n(self) -> int:
        return 1 << (self.m + self.p + self.r)

    @property
    def chirp_power(self) -> float:
        """Per-entry power of each transmitted chirp."""
        if self.energy is Energy.PER_ENTRY:
            return self.Q
        return self.Q * self.n / ((2 << self.r) * self.slot_len)

    @property
    def payload_lengths(self) -> list[int]:
        return [self.patch_bits - li for li in self.l]

    @property
    def B(self) -> int:
        return self.n_patches * self.patch_bits - sum(self.l)

    @property
    def decoder_params(self) -> DecoderParams:
        if self.decoder is not None:
            return replace(self.decoder, mode=self.mode)
        if self.K_expected is None:
            return DecoderParams(mode=self.mode)
        per_slot = math.ceil(2 * self.K_expected / self.n_slots)
        return DecoderParams(S=max(3 * per_slot, 1), mode=self.mode)

    def with_(self, **changes) -> "CodeConfig":
        return replace(self, **changes)


_PARITY_CACHE: dict[tuple, list[np.ndarray]] = {}


def parity_matrices(config: CodeConfig) -> list[np.ndarray]:
    """G_i for each patch: ``l[i] x (payload bits of patches < i)`` over GF(2).

    Drawn from a Philox stream keyed on ``(parity_seed, i)`` so encoder and
    decoder regenerate identical matrices independently.
    """
    key = (config.parity_seed, config.l, config.patch_bits)
    if key not in _PARITY_CACHE:
        lengths = config.payload_lengths
        mats = []
        for i, li in enumerate(config.l):
            prior = sum(lengths[:i])
            gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.parity_seed, i])))
            mats.append(gen.integers(0, 2, size=(li, prior), dtype=np.uint8))
        _PARITY_CACHE[key] = mats
    return _PARITY_CACHE[key]


def _gf2_apply(G: np.ndarray, v: np.ndarray) -> np.ndarray:
    return ((G.astype(np.int64) @ v.astype(np.int64)) & 1).astype(np.uint8)


def parity_encode(payloads: Sequence[np.ndarray], config: CodeConfig) -> list[np.ndarray]:
    """Append parity bits to each patch payload: ``payload_i || G_i (payload_1..i-1)``."""
    if len(payloads) != config.n_patches:
        raise ValueError(f"expected {config.n_patches} patch payloads, got {len(payloads)}")
    mats = parity_matrices(config)
    out = []
    for i, (pl, want) in enumerate(zip(payloads, config.payload_lengths)):
        pl = np.asarray(pl, dtype=np.uint8).reshape(-1)
        if pl.shape[0] != want:
            raise ValueError(f"patch {i} payload has {pl.shape[0]} bits, expected {want}")
        prior = np.concatenate([np.asarray(x, np.uint8).reshape(-1) for x in payloads[:i]]) if i else np.zeros(0, np.uint8)
        out.append(np.concatenate([pl, _gf2_apply(mats[i], prior)]))
    return out


def split_message(message: np.ndarray, config: CodeConfig) -> list[np.ndarray]:
    message = np.asarray(message, dtype=np.uint8).reshape(-1)
    if message.shape[0] != config.B:
        raise ValueError(f"message has {message.shape[0]} bits, expected B={config.B}")
    cuts = np.cumsum(config.payload_lengths)[:-1]
    return np.split(message, cuts)


def patch_codewords(patch_bits: np.ndarray, config: CodeConfig) -> list[tuple[int, ChirpParams]]:
    """The two (slot, label) placements of one patch: primary copy first."""
    params, primary, translate = config.layout.bits_to_params(patch_bits)
    return [(primary, params), (primary ^ translate, params.with_check_digit(1))]


def chirrup_encode(message: np.ndarray, config: CodeConfig) -> np.ndarray:
    """Noise-free transmitted signal of one message, length ``2**(m+p+r)``."""
    patches = parity_encode(split_message(message, config), config)
    dtype = np.complex128 if config.mode is Mode.COMPLEX else np.float64
    y = np.zeros(config.n, dtype=dtype)
    for i, bits in enumerate(patches):
        base = i * config.block_len
        for slot, params in patch_codewords(bits, config):
            start = base + slot * config.slot_len
            y[start : start + config.slot_len] += encode_chirp(params, config.chirp_power, config.mode)
    return y


def retention_test(coeff: complex, config: CodeConfig) -> bool:
    """Keep a component only if its fitted coefficient is close to 1."""
    if config.mode is Mode.COMPLEX:
        return abs(coeff - 1) < config.complex_tol
    return abs(coeff.real - 1) < config.real_tol and abs(coeff.imag) < config.real_tol


@dataclass
class SubblockResult:
    """Patch bit strings recovered from one sub-block.

    ``patches`` maps the bit-string key to ``(bits, distance)`` where
    ``distance`` is the best ``|c - 1|`` seen for that patch; ``history``
    holds the recovered key set after each cycle.
    """

    patches: dict[bytes, tuple[np.ndarray, float]]
    history: list[frozenset]
    peel_lists: list[list[ChirpParams]]


def decode_subblock(
    y_block: np.ndarray,
    config: CodeConfig,
    rng: Optional[np.random.Generator] = None,
) -> SubblockResult:
    """Peeling decoder over the ``2**p`` slots of one sub-block.

    Every cycle decodes each slot whose peel list changed since its last
    decode; new finds and twin-slot insertions are merged at the end of the
    cycle, so results do not depend on slot visiting order.
    """
    y_block = np.asarray(y_block)
    if y_block.shape[0] != config.block_len:
        raise ValueError(f"sub-block has {y_block.shape[0]} entries, expected {config.block_len}")
    rng = rng if rng is not None else np.random.default_rng()
    layout = config.layout
    dparams = config.decoder_params
    slots = y_block.reshape(config.n_slots, config.slot_len)
    peel: list[dict[ChirpParams, None]] = [{} for _ in range(config.n_slots)]
    dirty = [True] * config.n_slots
    found: dict[bytes, tuple[np.ndarray, float]] = {}
    history = []

    for _ in range(config.d):
        pending: list[tuple[int, ChirpParams]] = []
        for s in range(config.n_slots):
            if not dirty[s]:
                continue
            dirty[s] = False
            comps = chirp_reconstruct(slots[s], dparams, Q=config.chirp_power, rng=rng, known=list(peel[s]))
            for comp in comps:
                if comp.params in peel[s] or not retention_test(comp.coeff, config):
                    continue
                params = comp.params
                check = params.check_digit
                twin = s ^ layout.translate(params)
                primary = s if check == 0 else twin
                bits = layout.params_to_bits(params.with_check_digit(0), primary)
                key = bits_key(bits)
                dist = abs(comp.coeff - 1)
                if key not in found or dist < found[key][1]:
                    found[key] = (bits, dist)
                pending.append((s, params))
                pending.append((twin, params.with_check_digit(1 - check)))
        for s, params in pending:
            if params not in peel[s]:
                peel[s][params] = None
                dirty[s] = True
        history.append(frozenset(found))
        if not any(dirty):
            history.extend([history[-1]] * (config.d - len(history)))
            break

    return SubblockResult(found, history, [list(p) for p in peel])


def tree_stitch(per_patch: Sequence[Sequence[np.ndarray]], config: CodeConfig) -> list[np.ndarray]:
    """Join per-patch bit strings into messages through their parity checks.

    Paths grow breadth-first from patch-1 candidates; a patch-i candidate
    extends a path when its parity bits match ``G_i`` applied to the path's
    payload so far.  Roots with exactly one complete path yield a message;
    ambiguous roots are dropped.
    """
    if len(per_patch) != config.n_patches:
        raise ValueError(f"expected {config.n_patches} candidate lists, got {len(per_patch)}")
    lengths = config.payload_lengths
    mats = parity_matrices(config)

    def unique(cands):
        seen = {}
        for c in cands:
            c = np.asarray(c, dtype=np.uint8).reshape(-1)
            if c.shape[0] != config.patch_bits:
                raise ValueError(f"patch bit string has {c.shape[0]} bits, expected {config.patch_bits}")
            seen.setdefault(bits_key(c), c)
        return list(seen.values())

    roots = unique(per_patch[0])
    paths = [(k, [c[: lengths[0]]]) for k, c in enumerate(roots)]
    for i in range(1, config.n_patches):
        by_parity: dict[bytes, list[np.ndarray]] = {}
        for c in unique(per_patch[i]):
            by_parity.setdefault(bits_key(c[lengths[i]:]), []).append(c[: lengths[i]])
        extended = []
        for root, chunks in paths:
            need = bits_key(_gf2_apply(mats[i], np.concatenate(chunks)))
            for payload in by_parity.get(need, ()):
                extended.append((root, chunks + [payload]))
        paths = extended

    completions: dict[int, list[np.ndarray]] = {}
    for root, chunks in paths:
        completions.setdefault(root, []).append(np.concatenate(chunks))
    return [msgs[0] for _, msgs in sorted(completions.items()) if len(msgs) == 1]


def chirrup_decode(
    y: np.ndarray,
    config: CodeConfig,
    rng: Optional[np.random.Generator] = None,
    max_messages: Optional[int] = None,
) -> list[np.ndarray]:
    """Recover the list of transmitted ``B``-bit messages from ``y``.

    The list is not truncated to the number of senders unless
    ``max_messages`` is given, in which case messages whose worst patch
    coefficient is closest to 1 are kept.
    """
    y = np.asarray(y)
    if y.shape[0] != config.n:
        raise ValueError(f"received vector has {y.shape[0]} entries, expected {config.n}")
    rng = rng if rng is not None else np.random.default_rng()
    blocks = y.reshape(config.n_patches, config.block_len)
    results = [decode_subblock(block, config, rng) for block in blocks]
    messages = tree_stitch([[b for b, _ in res.patches.values()] for res in results], config)
    if max_messages is None or len(messages) <= max_messages:
        return messages
    return _rank(messages, results, config)[:max_messages]


def _rank(messages, results, config) -> list[np.ndarray]:
    def score(msg):
        patches = parity_encode(split_message(msg, config), config)
        return max(res.patches[bits_key(p)][1] for res, p in zip(results, patches))

    return sorted(messages, key=score)
