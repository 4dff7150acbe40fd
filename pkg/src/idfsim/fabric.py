"""Simulated PL configuration plane.

Frame memory is addressed by FAR (frame address register) values.  A frame
is exactly 101 32-bit words (3232 bits).  The configuration engine consumes
packet streams: writes go through a one-frame buffer and commit a frame only
once the first word of the next frame arrives, so the trailing all-zero
flush frame in a write sequence is what pushes the last real frame into
memory.  Reads emit one dummy frame of zeros ahead of real frame data for
the same reason.

FAR field layout (block_type[25:23], top_bottom[22], row[21:17],
column[16:7], minor[6:0]); only far_encode/far_decode depend on the bit
positions.
"""

import hashlib
import struct
from dataclasses import dataclass

from .packets import (
    CmdCode,
    ConfigRegister,
    FRAME_WORDS,
    NOOP_WORD,
    SYNC_WORD,
)

FRAME_BITS = FRAME_WORDS * 32

_FAR_FIELD_LIMITS = {
    "block_type": 7,
    "top_bottom": 1,
    "row": 31,
    "column": 1023,
    "minor": 127,
}


@dataclass(frozen=True)
class FarFields:
    block_type: int
    top_bottom: int
    row: int
    column: int
    minor: int

    def __post_init__(self):
        for name, limit in _FAR_FIELD_LIMITS.items():
            v = getattr(self, name)
            if not 0 <= v <= limit:
                raise ValueError(f"FAR field {name}={v} outside 0..{limit}")


def far_encode(f):
    return ((f.block_type << 23) | (f.top_bottom << 22) | (f.row << 17)
            | (f.column << 7) | f.minor)


def far_decode(word):
    if word >> 26:
        raise ValueError(f"FAR word 0x{word:08x} has bits set above [25]")
    return FarFields(
        block_type=(word >> 23) & 0x7,
        top_bottom=(word >> 22) & 0x1,
        row=(word >> 17) & 0x1F,
        column=(word >> 7) & 0x3FF,
        minor=word & 0x7F,
    )


class DeviceGeometry:
    """Frame address space of one device profile.

    `columns` is an ordered list of (kind, minor_count) pairs shared by both
    device halves and all configured block types; the FAR enumeration order
    is minor, then column, then row, then half, then block type.
    """

    def __init__(self, name, rows_per_half, columns, block_types=(0,)):
        if rows_per_half < 1:
            raise ValueError("rows_per_half must be >= 1")
        if not columns:
            raise ValueError("geometry needs at least one column")
        for kind, minors in columns:
            if not 1 <= minors <= 128:
                raise ValueError(f"column {kind}: minor count {minors} outside 1..128")
        self.name = name
        self.rows_per_half = rows_per_half
        self.columns = [(str(kind), int(minors)) for kind, minors in columns]
        self.block_types = sorted(set(int(b) for b in block_types))
        self._minors = [m for _, m in self.columns]

    @property
    def total_frames(self):
        per_row = sum(self._minors)
        return len(self.block_types) * 2 * self.rows_per_half * per_row

    @property
    def total_bits(self):
        return self.total_frames * FRAME_BITS

    def is_valid_far(self, f):
        return (f.block_type in self.block_types
                and f.top_bottom in (0, 1)
                and f.row < self.rows_per_half
                and f.column < len(self.columns)
                and f.minor < self._minors[f.column])

    def first_far(self):
        return FarFields(self.block_types[0], 0, 0, 0, 0)

    def next_far(self, f):
        """Advance to the next frame address, or None past the last frame."""
        if not self.is_valid_far(f):
            raise ValueError(f"FAR {f} is not valid for geometry {self.name}")
        if f.minor + 1 < self._minors[f.column]:
            return FarFields(f.block_type, f.top_bottom, f.row, f.column, f.minor + 1)
        if f.column + 1 < len(self.columns):
            return FarFields(f.block_type, f.top_bottom, f.row, f.column + 1, 0)
        if f.row + 1 < self.rows_per_half:
            return FarFields(f.block_type, f.top_bottom, f.row + 1, 0, 0)
        if f.top_bottom == 0:
            return FarFields(f.block_type, 1, 0, 0, 0)
        i = self.block_types.index(f.block_type)
        if i + 1 < len(self.block_types):
            return FarFields(self.block_types[i + 1], 0, 0, 0, 0)
        return None

    def iter_fars(self):
        f = self.first_far()
        while f is not None:
            yield f
            f = self.next_far(f)

    def far_words(self):
        return [far_encode(f) for f in self.iter_fars()]


def far_next(geometry, f):
    return geometry.next_far(f)


def desk_geometry():
    """Tiny exhaustive address space: 2 halves x 4 columns, 18 frames."""
    return DeviceGeometry(
        "desk",
        rows_per_half=1,
        columns=[("CLB", 4), ("CLB", 2), ("BRAM", 2), ("DSP", 1)],
    )


def z7020like_geometry():
    """Synthetic full-size profile: 9158 frames, 29,598,656 configuration bits."""
    columns = []
    for i in range(241):
        if i % 12 == 5:
            kind = "BRAM"
        elif i % 12 == 11:
            kind = "DSP"
        else:
            kind = "CLB"
        columns.append((kind, 19))
    return DeviceGeometry("z7020like", rows_per_half=1, columns=columns)


_BUILTIN_GEOMETRIES = {
    "desk": desk_geometry,
    "z7020like": z7020like_geometry,
}


def load_geometry(source):
    """Resolve a geometry by builtin name or config file path.

    File format is line-oriented key/value text (`=` optional), e.g.:

        name smallboard
        rows_per_half 2
        block_types 0
        column CLB 4
        column BRAM 2
    """
    builtin = _BUILTIN_GEOMETRIES.get(str(source))
    if builtin is not None:
        return builtin()
    name = None
    rows = None
    block_types = [0]
    columns = []
    with open(source, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.replace("=", " ").split()
            key = tokens[0].lower()
            try:
                if key == "name":
                    name = tokens[1]
                elif key == "rows_per_half":
                    rows = int(tokens[1])
                elif key == "block_types":
                    block_types = [int(t, 0) for t in tokens[1:]]
                elif key == "column":
                    columns.append((tokens[1], int(tokens[2])))
                else:
                    raise ValueError(f"unknown key {key!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{source}:{lineno}: {exc}") from None
    if name is None or rows is None or not columns:
        raise ValueError(f"{source}: geometry needs name, rows_per_half and columns")
    return DeviceGeometry(name, rows, columns, block_types)


class ConfigEngine:
    """The PL-side configuration state machine.

    One engine is exclusively owned by one caller at a time.  `execute`
    consumes a word stream and returns (readback_words, events); everything
    before a sync word is ignored, and a DESYNC command drops sync again.
    Events are stable lowercase strings.
    """

    def __init__(self, geometry, device_id):
        self.geometry = geometry
        self.device_id = device_id & 0xFFFFFFFF
        self.synced = False
        self.idcode_ok = False
        self.wcfg = False
        self.rcfg = False
        self.current_far = geometry.first_far()
        self.last_command = None
        self.last_type1_reg = None
        self.mask_reg = 0
        self.ctl0_reg = 0
        self.frame_buffer = []
        # FAR word -> list of 101 words; absent frames read as zero.
        self.memory = {}
        self.frame_versions = {}
        self._mutations = 0
        self._zero_frame = [0] * FRAME_WORDS

    # -- frame memory ------------------------------------------------------

    def read_frame(self, far_word):
        frame = self.memory.get(far_word)
        return list(frame) if frame is not None else [0] * FRAME_WORDS

    def flip_bit(self, far_word, word_index, bit):
        """XOR one configuration bit in place (test/fault bookkeeping)."""
        if not 0 <= word_index < FRAME_WORDS or not 0 <= bit < 32:
            raise ValueError("bit position outside a frame")
        frame = self.memory.setdefault(far_word, [0] * FRAME_WORDS)
        frame[word_index] ^= 1 << bit
        self._bump(far_word)

    def _bump(self, far_word):
        self._mutations += 1
        self.frame_versions[far_word] = self._mutations

    def _commit_frame(self, words, events):
        if self.current_far is None:
            events.append("far_overrun")
            return
        far_word = far_encode(self.current_far)
        self.memory[far_word] = list(words)
        self._bump(far_word)
        self.current_far = self.geometry.next_far(self.current_far)

    # -- stream execution --------------------------------------------------

    def execute(self, words):
        readback = []
        events = []
        i = 0
        n = len(words)
        while i < n:
            w = words[i]
            if not self.synced:
                if w == SYNC_WORD:
                    self.synced = True
                    self.idcode_ok = False
                    self.wcfg = False
                    self.rcfg = False
                    self.last_type1_reg = None
                    self.frame_buffer = []
                    events.append("sync")
                i += 1
                continue
            if w == NOOP_WORD:
                i += 1
                continue
            ptype = w >> 29
            op = (w >> 27) & 0x3
            if ptype == 0b001:
                reg_addr = (w >> 13) & 0x3FFF
                count = w & 0x7FF
                i += 1
                try:
                    reg = ConfigRegister(reg_addr)
                except ValueError:
                    events.append(f"ignored_register addr={reg_addr}")
                    if op == 2:
                        i += count
                    continue
                self.last_type1_reg = reg
                if op == 2:
                    payload = words[i:i + count]
                    if len(payload) < count:
                        events.append(f"truncated_payload reg={reg.name.lower()}")
                    i += count
                    self._write(reg, payload, events)
                elif op == 1:
                    self._read(reg, count, readback, events)
                else:
                    events.append(f"ignored_word word=0x{w:08x}")
                continue
            if ptype == 0b010:
                count = w & 0x7FFFFFF
                i += 1
                reg = self.last_type1_reg
                if op == 2:
                    payload = words[i:i + count]
                    if len(payload) < count:
                        events.append("truncated_payload reg=type2")
                    i += count
                    self._write(reg, payload, events)
                elif op == 1:
                    self._read(reg, count, readback, events)
                else:
                    events.append(f"ignored_word word=0x{w:08x}")
                continue
            events.append(f"ignored_word word=0x{w:08x}")
            i += 1
        return readback, events

    def _write(self, reg, payload, events):
        if reg is ConfigRegister.FDRI:
            self._write_fdri(payload, events)
            return
        if reg is ConfigRegister.CMD:
            if payload:
                self._command(payload[0], events)
            return
        if reg is ConfigRegister.IDCODE:
            if payload and payload[0] == self.device_id:
                self.idcode_ok = True
            else:
                self.idcode_ok = False
                got = payload[0] if payload else 0
                events.append(f"idcode_mismatch got=0x{got:08x}")
            return
        if reg is ConfigRegister.FAR:
            if payload:
                try:
                    f = far_decode(payload[0])
                except ValueError:
                    f = None
                if f is None or not self.geometry.is_valid_far(f):
                    events.append(f"bad_far word=0x{payload[0]:08x}")
                else:
                    self.current_far = f
            return
        if reg is ConfigRegister.MASK:
            if payload:
                self.mask_reg = payload[0]
            return
        if reg is ConfigRegister.CTL0:
            if payload:
                self.ctl0_reg = payload[0]
            return
        if reg is ConfigRegister.CRC:
            return
        events.append(f"ignored_write reg={reg.name.lower() if reg else 'none'}")

    def _command(self, code, events):
        self.last_command = code
        if code == CmdCode.WCFG:
            self.wcfg = True
            self.rcfg = False
        elif code == CmdCode.RCFG:
            self.rcfg = True
            self.wcfg = False
        elif code == CmdCode.DESYNC:
            self.synced = False
            self.wcfg = False
            self.rcfg = False
            self.frame_buffer = []
            events.append("desync")

    def _write_fdri(self, payload, events):
        if not self.wcfg:
            events.append("fdri_without_wcfg")
            return
        if not self.idcode_ok:
            events.append("fdri_rejected_idcode")
            return
        buf = self.frame_buffer
        buf.extend(payload)
        # Word-at-a-time equivalent: a full buffered frame commits as soon
        # as the next frame's first word arrives.
        while len(buf) > FRAME_WORDS:
            self._commit_frame(buf[:FRAME_WORDS], events)
            del buf[:FRAME_WORDS]

    def _read(self, reg, count, readback, events):
        if count == 0:
            return
        if reg is not ConfigRegister.FDRO:
            events.append(f"ignored_read reg={reg.name.lower() if reg else 'none'}")
            return
        if not self.rcfg:
            events.append("fdro_without_rcfg")
            return
        out = [0] * FRAME_WORDS
        while len(out) < count:
            if self.current_far is None:
                events.append("read_overrun")
                out.extend([0] * (count - len(out)))
                break
            far_word = far_encode(self.current_far)
            frame = self.memory.get(far_word)
            out.extend(frame if frame is not None else self._zero_frame)
            self.current_far = self.geometry.next_far(self.current_far)
        readback.extend(out[:count])


def engine_execute(state, words):
    readback, events = state.execute(words)
    return state, readback, events


def snapshot_digest(engine):
    """SHA-256 over every frame in FAR enumeration order."""
    h = hashlib.sha256()
    zero = struct.pack(f">{FRAME_WORDS}I", *([0] * FRAME_WORDS))
    memory = engine.memory
    for f in engine.geometry.iter_fars():
        frame = memory.get(far_encode(f))
        if frame is None:
            h.update(zero)
        else:
            h.update(struct.pack(f">{FRAME_WORDS}I", *frame))
    return h.hexdigest()


def dump_frames(engine, path):
    """Binary frame dump: 101 big-endian words per frame, FAR order."""
    with open(path, "wb") as f:
        for fields in engine.geometry.iter_fars():
            frame = engine.memory.get(far_encode(fields))
            if frame is None:
                frame = [0] * FRAME_WORDS
            f.write(struct.pack(f">{FRAME_WORDS}I", *frame))


def load_frame_dump(path, geometry):
    """Read a frame dump back into a FAR-word keyed dict."""
    frames = {}
    frame_bytes = FRAME_WORDS * 4
    with open(path, "rb") as f:
        data = f.read()
    expected = geometry.total_frames * frame_bytes
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    for i, fields in enumerate(geometry.iter_fars()):
        chunk = data[i * frame_bytes:(i + 1) * frame_bytes]
        frames[far_encode(fields)] = list(struct.unpack(f">{FRAME_WORDS}I", chunk))
    return frames
