"""Behavioral model of the design under test.

Two redundant AES-256 modules encrypt the same block under a fixed key and
a comparator drives a match line: low when the outputs are byte-equal, high
on mismatch.  A sensitivity map assigns configuration bits a criticality
class; a flipped module-critical bit corrupts that module's output with a
deterministic nonzero mask, and a flipped comparator-critical bit forces
the match line high regardless of the outputs.

Control lines mirror the PS GPIO wiring: a clock enable, one start per
module, and the match line routed back.  A full check takes 13 cycles
(11 execute + 2 compare) on the 50 MHz module clock.
"""

import random
from dataclasses import dataclass
from enum import Enum

from .aes import aes256_encrypt
from .fabric import FRAME_BITS

DEFAULT_KEY = bytes(range(32))

PIN_CLK_EN = 10
PIN_START0 = 11
PIN_START1 = 12
PIN_MATCH = 13

EXEC_CYCLES = 11
COMPARE_CYCLES = 2
CLOCK_MHZ = 50


class Criticality(Enum):
    NOT_CRITICAL = "not_critical"
    MODULE0 = "module0"
    MODULE1 = "module1"
    COMPARATOR = "comparator"


_CLASS_TOKENS = {
    "module0": Criticality.MODULE0,
    "module1": Criticality.MODULE1,
    "comparator": Criticality.COMPARATOR,
}


class MatchLine(Enum):
    LOW = "low"    # outputs equal
    HIGH = "high"  # error detected


class DesignHaltedError(RuntimeError):
    """Clock enable is low: the design cannot produce a result."""


class StartsNotAssertedError(RuntimeError):
    """Both start lines must be pulsed before sampling the match line."""


@dataclass
class DutConfig:
    key: bytes = DEFAULT_KEY
    variant: str = "with_idf"  # or "without_idf"
    exec_cycles: int = EXEC_CYCLES
    compare_cycles: int = COMPARE_CYCLES
    clock_mhz: int = CLOCK_MHZ


@dataclass
class ControlLines:
    clk_en: int = 0
    start_0: int = 0
    start_1: int = 0
    match_out: int = 0


@dataclass
class MatchResult:
    match_line: MatchLine
    outputs: tuple
    cycles_used: int


class SensitivityMap:
    """(FAR word, bit index) -> criticality; unlisted bits are not critical."""

    def __init__(self):
        self._by_far = {}
        self._count = 0

    def add(self, far_word, bit, criticality):
        if not 0 <= bit < FRAME_BITS:
            raise ValueError(f"bit index {bit} outside 0..{FRAME_BITS - 1}")
        criticality = Criticality(criticality)
        if criticality is Criticality.NOT_CRITICAL:
            return
        bits = self._by_far.setdefault(far_word, {})
        if bit not in bits:
            self._count += 1
        bits[bit] = criticality

    def criticality(self, far_word, bit):
        return self._by_far.get(far_word, {}).get(bit, Criticality.NOT_CRITICAL)

    @property
    def critical_count(self):
        return self._count

    @property
    def frames(self):
        return sorted(self._by_far)

    def bits_for(self, far_word):
        return self._by_far.get(far_word, {})

    def iter_entries(self):
        for far_word in sorted(self._by_far):
            bits = self._by_far[far_word]
            for bit in sorted(bits):
                yield far_word, bit, bits[bit]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("# sensitivity map: FAR_hex bit_index class\n")
            for far_word, bit, crit in self.iter_entries():
                f.write(f"0x{far_word:08x} {bit} {crit.value}\n")

    @classmethod
    def load(cls, path):
        smap = cls()
        with open(path, "r", encoding="utf-8") as f:
            for lineno, raw in enumerate(f, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 'FAR bit class'")
                try:
                    far_word = int(parts[0], 16)
                    bit = int(parts[1])
                    crit = _CLASS_TOKENS[parts[2]]
                except (ValueError, KeyError):
                    raise ValueError(f"{path}:{lineno}: cannot parse {line!r}") from None
                smap.add(far_word, bit, crit)
        return smap


def sensitivity_generate(seed, geometry, frames, critical_count,
                         split=(0.45, 0.45, 0.10)):
    """Deterministic fixture map: exactly `critical_count` critical bits.

    Bits are drawn without replacement from the given frames' 3232-bit
    positions and assigned MODULE0/MODULE1/COMPARATOR according to `split`
    (fractions, normalized).
    """
    frames = list(frames)
    space = len(frames) * FRAME_BITS
    if critical_count > space:
        raise ValueError(f"critical_count {critical_count} exceeds "
                         f"{space} available bits")
    total = sum(split)
    n0 = int(round(critical_count * split[0] / total))
    n1 = int(round(critical_count * split[1] / total))
    n0 = min(n0, critical_count)
    n1 = min(n1, critical_count - n0)
    classes = ([Criticality.MODULE0] * n0 + [Criticality.MODULE1] * n1
               + [Criticality.COMPARATOR] * (critical_count - n0 - n1))
    rng = random.Random(seed)
    positions = rng.sample(range(space), critical_count)
    rng.shuffle(classes)
    smap = SensitivityMap()
    for pos, crit in zip(positions, classes):
        far_word = frames[pos // FRAME_BITS]
        smap.add(far_word, pos % FRAME_BITS, crit)
    return smap


_ZERO_FRAME = [0] * (FRAME_BITS // 32)

_XS_MULT = 0x2545F4914F6CDD1D
_M64 = (1 << 64) - 1


def fault_mask(far_word, bit):
    """Deterministic nonzero 128-bit corruption mask for one flipped bit.

    Four rounds of xorshift64* seeded with (far << 12) | bit; the high 32
    bits of each round concatenate to 128 bits, OR 1 guarantees nonzero.
    """
    x = ((far_word << 12) | bit) & _M64
    mask = 0
    for _ in range(4):
        x ^= x >> 12
        x = (x ^ (x << 25)) & _M64
        x ^= x >> 27
        out = (x * _XS_MULT) & _M64
        mask = (mask << 32) | (out >> 32)
    return mask | 1


def widen_input(input4):
    """Replicate a 4-bit operand into the 128-bit plaintext block."""
    if not 0 <= input4 <= 0xF:
        raise ValueError("input must be a 4-bit value")
    byte = (input4 << 4) | input4
    return bytes([byte]) * 16


class DutModel:
    """Cached checker bound to one sensitivity map and golden baseline.

    The golden reference defaults to the all-zero configuration (an
    untouched fabric); `capture_baseline` rebases it on the engine's
    current memory.  Per-frame version counters keep re-checks cheap during
    long campaigns.
    """

    def __init__(self, config=None, sensitivity_map=None):
        self.config = config if config is not None else DutConfig()
        self.smap = sensitivity_map if sensitivity_map is not None else SensitivityMap()
        self.baseline = {}
        self.baseline_captured = False
        self._cipher_cache = {}
        self._frame_cache = {}
        self._frames = self.smap.frames
        # per frame: word index -> [(bit, class), ...] for fast flip scans
        self._word_index = {}
        for far_word in self._frames:
            by_word = {}
            for bit, crit in self.smap.bits_for(far_word).items():
                by_word.setdefault(bit >> 5, []).append((bit, crit))
            self._word_index[far_word] = by_word

    def capture_baseline(self, engine):
        self.baseline = {far: list(words) for far, words in engine.memory.items()}
        self.baseline_captured = True
        self._frame_cache = {}

    def _cipher(self, input4):
        ct = self._cipher_cache.get(input4)
        if ct is None:
            block = aes256_encrypt(self.config.key, widen_input(input4))
            ct = int.from_bytes(block, "big")
            self._cipher_cache[input4] = ct
        return ct

    def _frame_flips(self, engine, far_word):
        """Critical bits currently flipped in one frame, as (bit, class) list."""
        version = engine.frame_versions.get(far_word, 0)
        cached = self._frame_cache.get(far_word)
        if cached is not None and cached[0] == version:
            return cached[1]
        current = engine.memory.get(far_word)
        base = self.baseline.get(far_word)
        flips = []
        if not (current is None and base is None) and current != base:
            zero = _ZERO_FRAME
            cur = current if current is not None else zero
            ref = base if base is not None else zero
            if cur != ref:
                # only words carrying critical bits can matter
                for w, bits in self._word_index.get(far_word, {}).items():
                    diff = cur[w] ^ ref[w]
                    if diff:
                        flips.extend((bit, crit) for bit, crit in bits
                                     if diff & (1 << (bit & 31)))
                flips.sort()
        self._frame_cache[far_word] = (version, flips)
        return flips

    def flipped_critical_bits(self, engine):
        """All flipped critical bits, grouped by class, each sorted (far, bit)."""
        grouped = {Criticality.MODULE0: [], Criticality.MODULE1: [],
                   Criticality.COMPARATOR: []}
        for far_word in self._frames:
            for bit, crit in self._frame_flips(engine, far_word):
                grouped[crit].append((far_word, bit))
        return grouped

    def run_check(self, engine, lines, input4):
        if not lines.clk_en:
            raise DesignHaltedError("design halted: clock enable is low")
        if not (lines.start_0 and lines.start_1):
            raise StartsNotAssertedError("both start lines must be asserted")
        grouped = self.flipped_critical_bits(engine)
        base = self._cipher(input4)
        out0 = base
        out1 = base
        m0 = grouped[Criticality.MODULE0]
        m1 = grouped[Criticality.MODULE1]
        if m0:
            out0 ^= fault_mask(*m0[0])
        if m1:
            out1 ^= fault_mask(*m1[0])
        if grouped[Criticality.COMPARATOR]:
            match = MatchLine.HIGH
        else:
            match = MatchLine.LOW if out0 == out1 else MatchLine.HIGH
        cycles = self.config.exec_cycles + self.config.compare_cycles
        outputs = (out0.to_bytes(16, "big"), out1.to_bytes(16, "big"))
        return MatchResult(match, outputs, cycles)


def dut_run_check(engine, sensitivity_map, lines, input4, config=None,
                  baseline=None):
    """One-shot check against an all-zero (or explicit) golden baseline."""
    model = DutModel(config, sensitivity_map)
    if baseline is not None:
        model.baseline = dict(baseline)
    return model.run_check(engine, lines, input4)
