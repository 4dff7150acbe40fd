import random

import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from idfsim.aes import aes256_encrypt
from idfsim.dut import (
    ControlLines,
    Criticality,
    DEFAULT_KEY,
    DesignHaltedError,
    DutConfig,
    DutModel,
    MatchLine,
    SensitivityMap,
    StartsNotAssertedError,
    dut_run_check,
    fault_mask,
    sensitivity_generate,
    widen_input,
)
from idfsim.fabric import ConfigEngine, FRAME_BITS, desk_geometry
from idfsim.packets import ZEDBOARD_IDCODE


def _oracle_encrypt(key, block):
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def _oracle_decrypt(key, block):
    dec = Cipher(algorithms.AES(key), modes.ECB()).decryptor()
    return dec.update(block) + dec.finalize()


class TestAes256:
    def test_fips_vector(self):
        key = bytes(range(32))
        pt = bytes.fromhex("00112233445566778899aabbccddeeff")
        expected = bytes.fromhex("8ea2b7ca516745bfeafc49904b496089")
        # confirm the frozen vector against the independent oracle first
        assert _oracle_encrypt(key, pt) == expected
        assert aes256_encrypt(key, pt) == expected

    def test_matches_oracle_on_random_vectors(self):
        rng = random.Random(0xAE5)
        for _ in range(64):
            key = bytes(rng.randrange(256) for _ in range(32))
            pt = bytes(rng.randrange(256) for _ in range(16))
            assert aes256_encrypt(key, pt) == _oracle_encrypt(key, pt)

    def test_round_trip_via_oracle_decrypt(self):
        rng = random.Random(7)
        key = bytes(rng.randrange(256) for _ in range(32))
        pt = bytes(rng.randrange(256) for _ in range(16))
        assert _oracle_decrypt(key, aes256_encrypt(key, pt)) == pt

    def test_deterministic(self):
        key = DEFAULT_KEY
        pt = widen_input(0xA)
        assert aes256_encrypt(key, pt) == aes256_encrypt(key, pt)

    def test_rejects_bad_lengths(self):
        with pytest.raises(ValueError):
            aes256_encrypt(b"short", b"\x00" * 16)
        with pytest.raises(ValueError):
            aes256_encrypt(b"\x00" * 32, b"\x00" * 15)


class TestFaultMask:
    def test_deterministic(self):
        assert fault_mask(0x00400080, 17) == fault_mask(0x00400080, 17)

    def test_nonzero_over_many_positions(self):
        rng = random.Random(99)
        for _ in range(10_000):
            far = rng.getrandbits(26)
            bit = rng.randrange(FRAME_BITS)
            assert fault_mask(far, bit) != 0

    def test_adjacent_bits_differ(self):
        for far in (0, 0x80, 0x00400100):
            for bit in range(0, 64):
                assert fault_mask(far, bit) != fault_mask(far, bit + 1)

    def test_128_bit_range(self):
        for bit in (0, 1, 3231):
            assert 0 < fault_mask(0, bit) < (1 << 128)


class TestWidenInput:
    def test_replicates_nibble(self):
        assert widen_input(0x5) == b"\x55" * 16
        assert widen_input(0x0) == b"\x00" * 16
        assert widen_input(0xF) == b"\xff" * 16

    def test_range(self):
        with pytest.raises(ValueError):
            widen_input(16)


class TestSensitivityMap:
    def test_exact_counts(self):
        geo = desk_geometry()
        frames = geo.far_words()
        smap = sensitivity_generate(5, geo, frames, 1234)
        assert smap.critical_count == 1234

    def test_zero_count_is_empty(self):
        geo = desk_geometry()
        smap = sensitivity_generate(5, geo, geo.far_words(), 0)
        assert smap.critical_count == 0
        assert smap.criticality(0, 0) is Criticality.NOT_CRITICAL

    def test_count_overflow(self):
        geo = desk_geometry()
        with pytest.raises(ValueError):
            sensitivity_generate(5, geo, geo.far_words()[:1], FRAME_BITS + 1)

    def test_deterministic(self):
        geo = desk_geometry()
        a = sensitivity_generate(42, geo, geo.far_words(), 500)
        b = sensitivity_generate(42, geo, geo.far_words(), 500)
        assert list(a.iter_entries()) == list(b.iter_entries())

    def test_split_classes_present(self):
        geo = desk_geometry()
        smap = sensitivity_generate(1, geo, geo.far_words(), 300)
        classes = {crit for _, _, crit in smap.iter_entries()}
        assert classes == {Criticality.MODULE0, Criticality.MODULE1,
                           Criticality.COMPARATOR}

    def test_save_load_round_trip(self, tmp_path):
        geo = desk_geometry()
        smap = sensitivity_generate(3, geo, geo.far_words(), 77)
        path = tmp_path / "map.txt"
        smap.save(path)
        loaded = SensitivityMap.load(path)
        assert list(loaded.iter_entries()) == list(smap.iter_entries())

    def test_file_format(self, tmp_path):
        smap = SensitivityMap()
        smap.add(0x00000080, 35, Criticality.MODULE1)
        path = tmp_path / "map.txt"
        smap.save(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == "0x00000080 35 module1"

    def test_load_rejects_bad_lines(self, tmp_path):
        path = tmp_path / "map.txt"
        path.write_text("0x0 12 nonsense\n")
        with pytest.raises(ValueError, match="map.txt:1"):
            SensitivityMap.load(path)

    def test_bit_range_enforced(self):
        smap = SensitivityMap()
        with pytest.raises(ValueError):
            smap.add(0, FRAME_BITS, Criticality.MODULE0)


def _engine():
    return ConfigEngine(desk_geometry(), ZEDBOARD_IDCODE)


def _lines():
    return ControlLines(clk_en=1, start_0=1, start_1=1)


class TestDutRunCheck:
    def test_no_flips_match_low_all_inputs(self):
        engine = _engine()
        smap = SensitivityMap()
        for input4 in range(16):
            result = dut_run_check(engine, smap, _lines(), input4)
            assert result.match_line is MatchLine.LOW
            assert result.outputs[0] == result.outputs[1]

    def test_module0_flip_detected(self):
        engine = _engine()
        smap = SensitivityMap()
        smap.add(0, 100, Criticality.MODULE0)
        engine.flip_bit(0, 100 // 32, 100 % 32)
        result = dut_run_check(engine, smap, _lines(), 0)
        assert result.match_line is MatchLine.HIGH
        assert result.outputs[0] != result.outputs[1]

    def test_module1_flip_detected(self):
        engine = _engine()
        smap = SensitivityMap()
        smap.add(0x80, 9, Criticality.MODULE1)
        engine.flip_bit(0x80, 0, 9)
        result = dut_run_check(engine, smap, _lines(), 3)
        assert result.match_line is MatchLine.HIGH

    def test_comparator_flip_forces_high(self):
        engine = _engine()
        smap = SensitivityMap()
        smap.add(0, 5, Criticality.COMPARATOR)
        engine.flip_bit(0, 0, 5)
        result = dut_run_check(engine, smap, _lines(), 0)
        assert result.match_line is MatchLine.HIGH
        # the comparator itself is broken: outputs may still be equal
        assert result.outputs[0] == result.outputs[1]

    def test_not_critical_flip_match_low(self):
        engine = _engine()
        smap = SensitivityMap()
        smap.add(0, 77, Criticality.MODULE0)
        engine.flip_bit(0, 2, 0)  # bit 64: not in the map
        result = dut_run_check(engine, smap, _lines(), 0)
        assert result.match_line is MatchLine.LOW

    def test_flip_then_restore_low_for_all_inputs(self):
        engine = _engine()
        smap = SensitivityMap()
        smap.add(0, 0, Criticality.MODULE1)
        engine.flip_bit(0, 0, 0)
        engine.flip_bit(0, 0, 0)
        for input4 in range(16):
            result = dut_run_check(engine, smap, _lines(), input4)
            assert result.match_line is MatchLine.LOW

    def test_polarity_low_iff_equal(self):
        engine = _engine()
        smap = SensitivityMap()
        smap.add(0, 1, Criticality.MODULE0)
        result = dut_run_check(engine, smap, _lines(), 0)
        assert (result.match_line is MatchLine.LOW) == (
            result.outputs[0] == result.outputs[1])
        engine.flip_bit(0, 0, 1)
        result = dut_run_check(engine, smap, _lines(), 0)
        assert (result.match_line is MatchLine.LOW) == (
            result.outputs[0] == result.outputs[1])

    def test_cycles_used(self):
        result = dut_run_check(_engine(), SensitivityMap(), _lines(), 0)
        assert result.cycles_used == 13

    def test_clk_en_low_halts(self):
        with pytest.raises(DesignHaltedError):
            dut_run_check(_engine(), SensitivityMap(),
                          ControlLines(clk_en=0, start_0=1, start_1=1), 0)

    def test_starts_required(self):
        with pytest.raises(StartsNotAssertedError):
            dut_run_check(_engine(), SensitivityMap(),
                          ControlLines(clk_en=1, start_0=1, start_1=0), 0)

    def test_lowest_flip_selects_mask(self):
        engine = _engine()
        smap = SensitivityMap()
        smap.add(0, 10, Criticality.MODULE0)
        smap.add(0, 200, Criticality.MODULE0)
        engine.flip_bit(0, 0, 10)
        engine.flip_bit(0, 200 // 32, 200 % 32)
        result = dut_run_check(engine, smap, _lines(), 0)
        base = int.from_bytes(aes256_encrypt(DEFAULT_KEY, widen_input(0)), "big")
        assert int.from_bytes(result.outputs[0], "big") == base ^ fault_mask(0, 10)

    def test_model_cache_tracks_mutations(self):
        engine = _engine()
        smap = SensitivityMap()
        smap.add(0, 4, Criticality.MODULE0)
        model = DutModel(DutConfig(), smap)
        model.capture_baseline(engine)
        assert model.run_check(engine, _lines(), 0).match_line is MatchLine.LOW
        engine.flip_bit(0, 0, 4)
        assert model.run_check(engine, _lines(), 0).match_line is MatchLine.HIGH
        engine.flip_bit(0, 0, 4)
        assert model.run_check(engine, _lines(), 0).match_line is MatchLine.LOW

    def test_baseline_rebase(self):
        # flips are relative to the captured golden state, not to zero
        engine = _engine()
        engine.flip_bit(0, 0, 4)
        smap = SensitivityMap()
        smap.add(0, 4, Criticality.MODULE0)
        model = DutModel(DutConfig(), smap)
        model.capture_baseline(engine)
        assert model.run_check(engine, _lines(), 0).match_line is MatchLine.LOW
