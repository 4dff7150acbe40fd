"""Simulated DevC register bank, PCAP bridge, DMA engine and arbitration.

A Device bundles everything one campaign owns exclusively: the DevC
registers, the DMA descriptor queue, a sparse DRAM, GPIO pins, the
configuration-interface arbiter and the fabric-side configuration engine.

Transfer rules modeled after the real PCAP path:

* PS->PL transfers stream words from DRAM into the configuration engine.
* PL->PS transfers drain a previously requested read-back; a request cannot
  be split across transfers, so the receiving length must match exactly.
* A single PL->PS transfer may not exceed 1010 words (10 frames, 4040
  bytes): longer transfers would cross a 4 KB DMA boundary.
* Reading more than fits the 1024-byte receiver FIFO requires the PCAP
  clock slowed to 25 MHz (divisor >= 4); at full rate it overflows.

All failed transfers are all-or-nothing: no PL or DRAM state changes.
"""

import struct
from collections import deque
from dataclasses import dataclass
from enum import IntEnum

from .fabric import ConfigEngine, desk_geometry
from .packets import ZEDBOARD_IDCODE

UNLOCK_KEY = 0x757BDF0D
PL_ADDR = 0xFFFFFFFF

RX_FIFO_BYTES = 1024
RX_FIFO_WORDS = RX_FIFO_BYTES // 4
SAFE_DIVISOR = 4
MAX_READ_WORDS = 1010  # 10 frames; 4040 bytes keeps a transfer under 4 KB

PCAP_CLK_HZ = 100_000_000
PCAP_MAX_BYTES_PER_SEC = 145_000_000

_PAGE = 4096


class DevcError(Exception):
    """Base class for device-side failures."""


class LockedError(DevcError):
    pass


class SequencingError(DevcError):
    pass


class DescriptorError(DevcError):
    pass


class TransferError(DevcError):
    def __init__(self, reason, message):
        self.reason = reason
        super().__init__(message)


class Interface(IntEnum):
    """Configuration interfaces in priority order (highest first)."""

    JTAG = 3
    PCAP = 2
    ICAP = 1
    RBCRC = 0


class InitPhase(IntEnum):
    LOCKED = 0
    POWER_OK = 1
    INIT_DONE = 2
    PCAP_SELECTED = 3
    CFG_DONE = 4


@dataclass
class CtrlReg:
    pcap_pr: bool = False
    pcap_mode: bool = False
    loopback: bool = False


@dataclass
class IntStatus:
    dma_done: bool = False
    pcap_done: bool = False
    cfg_error: bool = False
    dma_error: bool = False


@dataclass
class DmaDescriptor:
    src: int
    dst: int
    src_len: int
    dst_len: int
    direction: str  # "ps2pl" or "pl2ps"


class Dram:
    """Sparse byte-addressed memory over a 32-bit space; unwritten reads 0.

    Words are stored big-endian, matching the on-disk sequence format.
    """

    def __init__(self):
        self._pages = {}

    def _page_for(self, addr, create):
        base = addr & ~(_PAGE - 1)
        page = self._pages.get(base)
        if page is None and create:
            page = self._pages[base] = bytearray(_PAGE)
        return base, page

    def write_bytes(self, addr, data):
        data = memoryview(bytes(data))
        while data:
            base, page = self._page_for(addr, create=True)
            off = addr - base
            n = min(_PAGE - off, len(data))
            page[off:off + n] = data[:n]
            data = data[n:]
            addr += n

    def read_bytes(self, addr, length):
        out = bytearray()
        while length:
            base, page = self._page_for(addr, create=False)
            off = addr - base
            n = min(_PAGE - off, length)
            if page is None:
                out.extend(b"\x00" * n)
            else:
                out.extend(page[off:off + n])
            length -= n
            addr += n
        return bytes(out)

    def write_word(self, addr, word):
        self.write_bytes(addr, struct.pack(">I", word & 0xFFFFFFFF))

    def read_word(self, addr):
        return struct.unpack(">I", self.read_bytes(addr, 4))[0]

    def write_words(self, addr, words):
        self.write_bytes(addr, struct.pack(f">{len(words)}I", *words))

    def read_words(self, addr, count):
        return list(struct.unpack(f">{count}I", self.read_bytes(addr, count * 4)))

    def load_image(self, path, addr):
        with open(path, "rb") as f:
            data = f.read()
        self.write_bytes(addr, data)
        return len(data)

    def store_image(self, path, addr, length):
        with open(path, "wb") as f:
            f.write(self.read_bytes(addr, length))


class Device:
    """One exclusively-owned DevC + PCAP + engine + DRAM unit."""

    def __init__(self, geometry=None, device_id=ZEDBOARD_IDCODE):
        self.geometry = geometry if geometry is not None else desk_geometry()
        self.engine = ConfigEngine(self.geometry, device_id)
        self.dram = Dram()
        self.ctrl = CtrlReg()
        self.int_sts = IntStatus()
        self.locked = True
        self.phase = InitPhase.LOCKED
        self.clock_divisor = 1
        self.owner = None
        self.dma_queue = deque()
        self.dma_src = 0
        self.dma_dst = 0
        self.dma_src_len = 0
        self.dma_dst_len = 0
        self.gpio = {}
        self.events = []
        self.pending_readback = None
        self.words_moved = 0
        self.sim_seconds = 0.0

    # -- bookkeeping ---------------------------------------------------------

    def _event(self, line):
        self.events.append(line)

    def drain_events(self):
        out = self.events
        self.events = []
        return out

    def set_pin(self, pin, level):
        self.gpio[pin] = 1 if level else 0

    def get_pin(self, pin):
        return self.gpio.get(pin, 0)

    # -- lock and registers ----------------------------------------------

    def unlock(self, key):
        if key != UNLOCK_KEY:
            self._event(f"UNLOCK REJECTED KEY=0x{key:08x}")
            raise LockedError("wrong unlock key; device remains locked")
        self.locked = False
        self._event("UNLOCK OK")

    def write_reg(self, name, value):
        """Register write honoring the lock: while locked, writes are dropped."""
        if self.locked:
            self._event(f"REGWRITE DROPPED LOCKED {name}")
            return
        if name == "ctrl_pcap_pr":
            self.ctrl.pcap_pr = bool(value)
        elif name == "ctrl_pcap_mode":
            self.ctrl.pcap_mode = bool(value)
        elif name == "ctrl_loopback":
            self.ctrl.loopback = bool(value)
        elif name == "dma_src":
            self.dma_src = value & 0xFFFFFFFF
        elif name == "dma_dst":
            self.dma_dst = value & 0xFFFFFFFF
        elif name == "dma_src_len":
            self.dma_src_len = value
        elif name == "dma_dst_len":
            # Writing the destination length last is the enqueue trigger.
            self.dma_dst_len = value
            self._enqueue_descriptor()
        else:
            raise ValueError(f"unknown register {name!r}")

    # -- initialization ----------------------------------------------------

    def pl_initialize(self):
        """Walk the PL bring-up ladder (power, init, PCAP select, cfg done).

        Requires the device unlocked and ctrl.pcap_pr/ctrl.pcap_mode already
        set, otherwise the PCAP-select phase is unreachable.
        """
        if self.locked:
            raise LockedError("unlock the DevC interface first")
        if self.phase != InitPhase.LOCKED:
            raise SequencingError(f"pl_initialize called in phase {self.phase.name}")
        self.phase = InitPhase.POWER_OK
        self.phase = InitPhase.INIT_DONE
        if not (self.ctrl.pcap_pr and self.ctrl.pcap_mode):
            raise SequencingError("ctrl.pcap_pr and ctrl.pcap_mode must be set "
                                  "before PCAP can be selected")
        self.phase = InitPhase.PCAP_SELECTED
        self.phase = InitPhase.CFG_DONE
        self._event("PL INIT CFG_DONE")

    def set_pcap_clock_divisor(self, div):
        if div < 1:
            raise ValueError("clock divisor must be >= 1")
        self.clock_divisor = int(div)

    @property
    def pcap_clock_hz(self):
        return PCAP_CLK_HZ // self.clock_divisor

    # -- DMA ---------------------------------------------------------------

    def dma_enqueue(self, src, dst, src_len, dst_len):
        """Queue a transfer by writing the four descriptor registers in order."""
        self.write_reg("dma_src", src)
        self.write_reg("dma_dst", dst)
        self.write_reg("dma_src_len", src_len)
        self.write_reg("dma_dst_len", dst_len)

    def _enqueue_descriptor(self):
        if self.phase != InitPhase.CFG_DONE:
            raise SequencingError("not initialized: PL configuration not done")
        src, dst = self.dma_src, self.dma_dst
        if (src == PL_ADDR) == (dst == PL_ADDR):
            raise DescriptorError("exactly one of src/dst must be the PL "
                                  f"address 0x{PL_ADDR:08X}")
        direction = "ps2pl" if dst == PL_ADDR else "pl2ps"
        self.dma_queue.append(DmaDescriptor(src, dst, self.dma_src_len,
                                            self.dma_dst_len, direction))
        self._event(f"DMA QUEUED {direction.upper()} SRC=0x{src:08x} "
                    f"DST=0x{dst:08x} LEN={self.dma_dst_len}")

    def dma_process(self):
        """Execute the oldest queued transfer; raises on any rule violation.

        Errors consume the descriptor, set int_sts flags and leave all PL
        and DRAM state untouched.
        """
        if not self.dma_queue:
            raise DescriptorError("no DMA descriptor queued")
        desc = self.dma_queue.popleft()
        try:
            if self.phase != InitPhase.CFG_DONE:
                raise TransferError("not-initialized", "PL configuration not done")
            if self.owner is not Interface.PCAP:
                raise TransferError("not-owner", "PCAP does not own the "
                                    "configuration interface")
            if desc.src_len != desc.dst_len:
                raise TransferError("width", f"source length {desc.src_len} != "
                                    f"destination length {desc.dst_len}")
            if desc.direction == "ps2pl":
                events = self._transfer_ps2pl(desc)
            else:
                events = self._transfer_pl2ps(desc)
        except TransferError as exc:
            self.int_sts.dma_error = True
            self._event(f"DMA ERROR {exc.reason.upper()} LEN={desc.dst_len}")
            raise
        self.int_sts.dma_done = True
        self.int_sts.pcap_done = True
        self.words_moved += desc.dst_len
        rate = min(4 * self.pcap_clock_hz, PCAP_MAX_BYTES_PER_SEC)
        self.sim_seconds += (desc.dst_len * 4) / rate
        self._event(f"DMA {desc.direction.upper()} DONE WORDS={desc.dst_len}")
        return events

    def _transfer_ps2pl(self, desc):
        words = self.dram.read_words(desc.src, desc.src_len)
        readback, events = self.engine.execute(words)
        for ev in events:
            self._event(f"ENGINE {ev}")
            if ev == "desync":
                self._release_owner()
            elif not ev.startswith(("sync", "desync")):
                self.int_sts.cfg_error = True
        if readback:
            if self.pending_readback is not None:
                self._event("READBACK DROPPED UNREAD")
            self.pending_readback = readback
        return events

    def _transfer_pl2ps(self, desc):
        if desc.dst_len > MAX_READ_WORDS:
            raise TransferError("boundary", f"{desc.dst_len} words cross a 4 KB "
                                f"DMA boundary (max {MAX_READ_WORDS})")
        if desc.dst_len > RX_FIFO_WORDS and self.clock_divisor < SAFE_DIVISOR:
            raise TransferError("overflow", f"{desc.dst_len * 4} bytes overflow "
                                f"the {RX_FIFO_BYTES}-byte receiver FIFO at "
                                f"divisor {self.clock_divisor}")
        if self.pending_readback is None:
            raise TransferError("width", "no read-back data pending")
        if len(self.pending_readback) != desc.dst_len:
            raise TransferError("width", "a read-back cannot be split: "
                                f"{len(self.pending_readback)} words pending, "
                                f"{desc.dst_len} requested")
        self.dram.write_words(desc.dst, self.pending_readback)
        self.pending_readback = None
        return []

    # -- arbitration ---------------------------------------------------------

    def interface_acquire(self, kind):
        """Request the configuration interface; returns True when granted."""
        kind = Interface(kind)
        if self.owner is kind:
            return True
        if kind is Interface.RBCRC and self.owner is not None:
            self._event(f"ACQUIRE RBCRC IGNORED OWNER={self.owner.name}")
            return False
        if self.owner is None:
            self.owner = kind
            self._event(f"ACQUIRE {kind.name} GRANTED")
            return True
        if kind > self.owner:
            self._event(f"ACQUIRE {kind.name} PREEMPTS {self.owner.name}")
            self.owner = kind
            return True
        self._event(f"ACQUIRE {kind.name} IGNORED OWNER={self.owner.name}")
        return False

    def _release_owner(self):
        if self.owner is not None:
            self._event(f"DESYNC RELEASE {self.owner.name}")
            self.owner = None

    def interface_release_on_desync(self):
        """Explicit release hook for interfaces without a modeled data path."""
        self._release_owner()


def boot_device(geometry=None, device_id=ZEDBOARD_IDCODE):
    """Unlock, select PCAP and finish PL bring-up; ready for transfers."""
    dev = Device(geometry, device_id)
    dev.unlock(UNLOCK_KEY)
    dev.write_reg("ctrl_pcap_pr", 1)
    dev.write_reg("ctrl_pcap_mode", 1)
    dev.write_reg("ctrl_loopback", 0)
    dev.pl_initialize()
    return dev
