"""Fault-injection campaign driver and report arithmetic.

An injection cycle follows the PS-side procedure exactly: stop the module
clocks, read the target frame back over PCAP into DRAM, XOR one bit, write
the modified frame back, restart the clocks, pulse the start lines, sample
the match line, then restore the original frame the same way.  DRAM keeps
two counters, detected errors at 0xFFFF0000 and error-free injections at
0xFFFF0008, which the summary must always agree with.

The frame write reuses a resident template: one full frame-write command
sequence plus the de-synchronization footer, uploaded to DRAM at 0x00200000
during campaign initialization.  Injections patch the FAR payload and the
101 data words in place and stream the whole template to the PL.
"""

import csv
import io
from dataclasses import dataclass

from . import devc
from .devc import DevcError, Interface, TransferError
from .dut import (
    ControlLines,
    MatchLine,
    PIN_CLK_EN,
    PIN_MATCH,
    PIN_START0,
    PIN_START1,
)
from .fabric import FRAME_WORDS, far_decode
from .packets import (
    build_desync_footer,
    build_readback_sequence,
    build_write_frame_sequence,
    words_to_bytes,
)

TEMPLATE_ADDR = 0x00200000
READBACK_REQ_ADDR = 0x00280000
READBACK_DST_ADDR = 0x00300000
ERROR_COUNTER_ADDR = 0xFFFF0000
OK_COUNTER_ADDR = 0xFFFF0008

# Template word indices: FAR payload and first frame-data word.
TPL_FAR_INDEX = 6
TPL_DATA_INDEX = 11

REFERENCE_INJECTIONS = 64640   # 20 frames x 3232 bits
REFERENCE_MINUTES = 440.0


@dataclass
class InjectionRecord:
    far: int
    word_index: int
    bit_index_in_word: int
    detected: bool
    timestamp: int
    error: str | None = None


@dataclass
class FrameRow:
    far: int
    injections: int
    critical: int
    non_critical: int


@dataclass
class CampaignSummary:
    variant: str
    total_injections: int
    non_critical: int
    critical: int
    estimated_minutes: float
    transfer_errors: int = 0


@dataclass
class FrameReport:
    far: int
    records: list
    detected: int
    estimated_minutes: float


def estimate_time(injections, minutes_per_64640=REFERENCE_MINUTES):
    """Projected campaign minutes at the reference hardware rate."""
    if injections < 0:
        raise ValueError("injection count cannot be negative")
    return injections * (minutes_per_64640 / REFERENCE_INJECTIONS)


def frame_template_words(device_id, far_word=0):
    """Resident DRAM template: one-frame write sequence plus footer."""
    zero_frame = [0] * FRAME_WORDS
    seq = build_write_frame_sequence(device_id, far_word, [zero_frame])
    return seq.words + build_desync_footer().words


def campaign_init(device):
    """Load the frame template, zero both counters, enable the DUT clock."""
    if device.phase != devc.InitPhase.CFG_DONE:
        raise DevcError("device not initialized: run the bring-up sequence first")
    template = frame_template_words(device.engine.device_id)
    device.dram.write_words(TEMPLATE_ADDR, template)
    device.dram.write_word(ERROR_COUNTER_ADDR, 0)
    device.dram.write_word(OK_COUNTER_ADDR, 0)
    device.set_pin(PIN_CLK_EN, 1)
    return len(template)


class Campaign:
    """Runs injections against one exclusively-owned device."""

    def __init__(self, device, dut, input4=0, fail_fast=False, log=None):
        self.device = device
        self.dut = dut
        self.input4 = input4
        self.fail_fast = fail_fast
        self.log = log
        self._tick = 0
        self._template_len = campaign_init(device)
        self._request_cache = {}
        if not dut.baseline_captured:
            dut.capture_baseline(device.engine)

    # -- plumbing -----------------------------------------------------------

    def _drain_events(self):
        events = self.device.drain_events()
        if self.log is not None:
            for line in events:
                self.log.write(line + "\n")

    def _acquire_pcap(self):
        if not self.device.interface_acquire(Interface.PCAP):
            raise TransferError("not-owner", "PCAP could not acquire the "
                                "configuration interface")

    def _request_bytes(self, far_word):
        blob = self._request_cache.get(far_word)
        if blob is None:
            seq = build_readback_sequence(far_word, 1)
            blob = (words_to_bytes(seq.words), len(seq.words))
            self._request_cache[far_word] = blob
        return blob

    def read_frame(self, far_word):
        """Read one frame over PCAP; lands at READBACK_DST_ADDR in DRAM."""
        dev = self.device
        data, nwords = self._request_bytes(far_word)
        dev.dram.write_bytes(READBACK_REQ_ADDR, data)
        self._acquire_pcap()
        dev.dma_enqueue(READBACK_REQ_ADDR, devc.PL_ADDR, nwords, nwords)
        dev.dma_process()
        dev.dma_enqueue(devc.PL_ADDR, READBACK_DST_ADDR,
                        2 * FRAME_WORDS, 2 * FRAME_WORDS)
        dev.dma_process()
        # First 101 words are the frame buffer's dummy frame.
        return dev.dram.read_words(READBACK_DST_ADDR + 4 * FRAME_WORDS,
                                   FRAME_WORDS)

    def write_template_frame(self):
        """Stream the resident template (current FAR + data words) to the PL."""
        dev = self.device
        self._acquire_pcap()
        dev.dma_enqueue(TEMPLATE_ADDR, devc.PL_ADDR,
                        self._template_len, self._template_len)
        dev.dma_process()

    def stage_frame(self, far_word, frame_words):
        dram = self.device.dram
        dram.write_word(TEMPLATE_ADDR + 4 * TPL_FAR_INDEX, far_word)
        dram.write_words(TEMPLATE_ADDR + 4 * TPL_DATA_INDEX, frame_words)

    def _flip_template_bit(self, word_index, bit):
        addr = TEMPLATE_ADDR + 4 * (TPL_DATA_INDEX + word_index)
        dram = self.device.dram
        dram.write_word(addr, dram.read_word(addr) ^ (1 << bit))

    def _bump_counter(self, addr):
        dram = self.device.dram
        dram.write_word(addr, dram.read_word(addr) + 1)

    # -- one injection ------------------------------------------------------

    def inject_and_check(self, far_word, word_index, bit, refresh=True):
        """Flip one configuration bit, sample the match line, restore.

        With `refresh` the frame is first read back from the PL into the
        template (the automatic-mode procedure); without it the template's
        resident frame image is used as-is (manual mode with an externally
        loaded image).  Restoration is attempted unconditionally once the
        frame is staged, so a failed transfer never leaves the fabric
        modified.
        """
        if not 0 <= word_index < FRAME_WORDS or not 0 <= bit < 32:
            raise ValueError("bit position outside a frame")
        dev = self.device
        self._tick += 1
        record = InjectionRecord(far_word, word_index, bit, False, self._tick)
        dev.set_pin(PIN_CLK_EN, 0)
        staged = not refresh
        try:
            if refresh:
                frame = self.read_frame(far_word)
                self.stage_frame(far_word, frame)
                staged = True
            self._flip_template_bit(word_index, bit)
            self.write_template_frame()
            dev.set_pin(PIN_CLK_EN, 1)
            dev.set_pin(PIN_START0, 1)
            dev.set_pin(PIN_START1, 1)
            lines = ControlLines(clk_en=dev.get_pin(PIN_CLK_EN),
                                 start_0=1, start_1=1)
            result = self.dut.run_check(dev.engine, lines, self.input4)
            detected = result.match_line is MatchLine.HIGH
            dev.set_pin(PIN_MATCH, 1 if detected else 0)
            dev.set_pin(PIN_START0, 0)
            dev.set_pin(PIN_START1, 0)
            record.detected = detected
        except (TransferError, DevcError) as exc:
            record.error = str(exc)
        finally:
            if staged:
                dev.set_pin(PIN_CLK_EN, 0)
                self._flip_template_bit(word_index, bit)
                try:
                    self.write_template_frame()
                except (TransferError, DevcError) as exc:
                    if record.error is None:
                        record.error = f"restore failed: {exc}"
            dev.set_pin(PIN_CLK_EN, 1)
            self._drain_events()
        if record.error is None:
            self._bump_counter(ERROR_COUNTER_ADDR if record.detected
                               else OK_COUNTER_ADDR)
        return record

    # -- campaign loops ------------------------------------------------------

    def run_frame(self, far_word, refresh=True):
        """All 3232 injections of one frame, word-major, bit 0 to 31."""
        records = []
        for word_index in range(FRAME_WORDS):
            for bit in range(32):
                record = self.inject_and_check(far_word, word_index, bit,
                                               refresh=refresh)
                if record.error is not None and self.fail_fast:
                    raise TransferError("campaign", record.error)
                records.append(record)
        return records

    def run_auto(self, far_words, variant="with_idf"):
        """Full automatic campaign over a FAR list; returns (summary, rows)."""
        rows = []
        total = critical = errors = 0
        for far_word in far_words:
            records = self.run_frame(far_word)
            ok_records = [r for r in records if r.error is None]
            frame_critical = sum(1 for r in ok_records if r.detected)
            rows.append(FrameRow(far_word, len(ok_records), frame_critical,
                                 len(ok_records) - frame_critical))
            total += len(ok_records)
            critical += frame_critical
            errors += len(records) - len(ok_records)
        summary = CampaignSummary(
            variant=variant,
            total_injections=total,
            non_critical=total - critical,
            critical=critical,
            estimated_minutes=estimate_time(total),
            transfer_errors=errors,
        )
        return summary, rows

    def run_manual(self, far_word, use_dram_frame=False):
        """One-frame campaign; optionally trusts the frame image already in
        DRAM (loaded externally) instead of reading it back per injection."""
        fields = far_decode(far_word)
        if not self.device.geometry.is_valid_far(fields):
            raise ValueError(f"FAR 0x{far_word:08x} invalid for geometry "
                             f"{self.device.geometry.name}")
        if use_dram_frame:
            # The image is already at the template's data offset; only the
            # FAR payload needs pointing at the target frame.
            self.device.dram.write_word(TEMPLATE_ADDR + 4 * TPL_FAR_INDEX,
                                        far_word)
        records = self.run_frame(far_word, refresh=not use_dram_frame)
        detected = sum(1 for r in records if r.error is None and r.detected)
        return FrameReport(far_word, records, detected,
                           estimate_time(len(records)))


def counters(device):
    """(detected_errors, error_free) as stored in DRAM."""
    return (device.dram.read_word(ERROR_COUNTER_ADDR),
            device.dram.read_word(OK_COUNTER_ADDR))


def campaign_auto(device, dut, far_words, variant="with_idf", **kwargs):
    return Campaign(device, dut, **kwargs).run_auto(far_words, variant)


def campaign_manual(device, dut, far_word, use_dram_frame=False, **kwargs):
    return Campaign(device, dut, **kwargs).run_manual(far_word, use_dram_frame)


def compare_summaries(with_idf, without_idf):
    """Critical-bit delta and relative reduction (%) of isolation vs none."""
    delta = without_idf.critical - with_idf.critical
    pct = 100.0 * delta / without_idf.critical if without_idf.critical else 0.0
    return delta, pct


def merge_summaries(*summaries):
    """Combine shard summaries from disjoint FAR ranges (order-independent)."""
    if not summaries:
        raise ValueError("nothing to merge")
    variants = {s.variant for s in summaries}
    if len(variants) > 1:
        raise ValueError(f"cannot merge mixed variants {sorted(variants)}")
    total = sum(s.total_injections for s in summaries)
    critical = sum(s.critical for s in summaries)
    errors = sum(s.transfer_errors for s in summaries)
    return CampaignSummary(
        variant=summaries[0].variant,
        total_injections=total,
        non_critical=total - critical,
        critical=critical,
        estimated_minutes=estimate_time(total),
        transfer_errors=errors,
    )


# -- report rendering ----------------------------------------------------------


def frame_rows_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["far", "injections", "critical", "non_critical"])
    for row in rows:
        w.writerow([f"0x{row.far:08x}", row.injections, row.critical,
                    row.non_critical])
    return buf.getvalue()


def summary_text(summary):
    label = "With IDF" if summary.variant == "with_idf" else "Without IDF"
    lines = [
        f"Injection Type: Frame Errors ({label})",
        f"Total Injections: {summary.total_injections}",
        f"Non-critical bits (no error): {summary.non_critical}",
        f"Critical bits (error detected): {summary.critical}",
        f"Estimated testing time (min): {summary.estimated_minutes:g}",
    ]
    if summary.transfer_errors:
        lines.append(f"Transfer errors (skipped): {summary.transfer_errors}")
    return "\n".join(lines) + "\n"


def summary_csv(summary):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "total_injections", "non_critical", "critical",
                "estimated_minutes", "transfer_errors"])
    w.writerow([summary.variant, summary.total_injections,
                summary.non_critical, summary.critical,
                f"{summary.estimated_minutes:g}", summary.transfer_errors])
    return buf.getvalue()


# -- utilization and overhead ---------------------------------------------------


@dataclass
class UtilizationRow:
    site_type: str
    used: int | None
    fixed: int | None
    available: int | None


@dataclass
class UtilizationReport:
    rows: list

    @property
    def by_site(self):
        return {r.site_type: r for r in self.rows}


def _cell(value):
    value = value.strip()
    if value in ("", "-"):
        return None
    return int(value)


def parse_utilization(text):
    """CSV rows `site_type,used,fixed,available`; '-' cells mean absent."""
    rows = []
    reader = csv.reader(io.StringIO(text))
    for lineno, parts in enumerate(reader, 1):
        if not parts or (len(parts) == 1 and not parts[0].strip()):
            continue
        if parts[0].lstrip().startswith("#"):
            continue
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            rows.append(UtilizationRow(parts[0].strip(), _cell(parts[1]),
                                       _cell(parts[2]), _cell(parts[3])))
        except ValueError:
            raise ValueError(f"line {lineno}: bad numeric cell in {parts!r}") from None
    return UtilizationReport(rows)


@dataclass
class OverheadRow:
    site_type: str
    overhead: int
    percent: float
    warning: str | None = None


def overhead_diff(without_idf, with_idf):
    """Per-site resources reserved by isolation: available delta and percent.

    Returns (rows, warnings).  Sites missing from either report are skipped
    with a warning; negative overheads are kept but flagged.
    """
    rows = []
    warnings = []
    with_sites = with_idf.by_site
    without_sites = without_idf.by_site
    order = [r.site_type for r in without_idf.rows]
    order += [r.site_type for r in with_idf.rows if r.site_type not in without_sites]
    for site in order:
        a = without_sites.get(site)
        b = with_sites.get(site)
        if a is None or b is None:
            warnings.append(f"site {site!r} missing from one report; skipped")
            continue
        if a.available is None and b.available is None:
            rows.append(OverheadRow(site, 0, 0.0))
            continue
        if a.available is None or b.available is None:
            warnings.append(f"site {site!r} has no comparable availability; skipped")
            continue
        overhead = a.available - b.available
        percent = 100.0 * overhead / a.available if a.available else 0.0
        warning = None
        if overhead < 0:
            warning = "negative overhead: inconsistent input data"
            warnings.append(f"site {site!r}: {warning}")
        rows.append(OverheadRow(site, overhead, percent, warning))
    return rows, warnings


def overhead_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["site_type", "overhead", "percent"])
    for row in rows:
        w.writerow([row.site_type, row.overhead, f"{row.percent:.1f}"])
    return buf.getvalue()
