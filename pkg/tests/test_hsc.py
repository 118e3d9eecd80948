import numpy as np
import pytest

from fetchguard import (Checker, ChunkingSpec, CodeKind, CollisionError,
                        Coupling, DataError, DepthPolicy, FetchEvent, HscConfig,
                        HsmSpec, ParameterError, ProgramImage, UnconfiguredPolicy,
                        gen_synthetic, install, resolve_depth)
from fetchguard.hsc import PRESETS

rng = np.random.default_rng(7)


@pytest.fixture(scope="module")
def image():
    return gen_synthetic(216, seed=1, name="prog216")


def test_preset_table_matches_parameter_table():
    shapes = {name: [(k, HsmSpec(ChunkingSpec(32, k), kind, 8).entry_bits
                      if kind.family.value == "hsec" else kind.check_width)
                     for _, k, kind in rows]
              for name, rows in PRESETS.items()}
    assert shapes["SINGLE_HSEC32"] == [(1, 6)]
    assert shapes["SINGLE_HSEC16"] == [(2, 5)]
    assert shapes["SINGLE_HSEC8"] == [(4, 4)]
    assert shapes["PAPER_COMBINED"] == [(1, 6), (4, 4)]
    assert shapes["CRC32"] == [(1, 32)]
    assert shapes["CRC16"] == [(2, 16)]
    assert shapes["CRC8"] == [(4, 8)]


def test_resolve_depth():
    assert resolve_depth(216, DepthPolicy.EXACT) == 216
    assert resolve_depth(216, DepthPolicy.POW2) == 256
    assert resolve_depth(1024, DepthPolicy.POW2) == 1024
    with pytest.raises(ParameterError):
        resolve_depth(0, DepthPolicy.EXACT)


def test_install_combined(image):
    checker = install(image, HscConfig.from_preset("PAPER_COMBINED", 216))
    assert len(checker.modules) == 2
    assert all(m.spec.depth == 216 for m in checker.modules)
    assert checker.storage_bits() == 6 * 216 + 4 * 4 * 216


def test_install_replay_no_alarms(image):
    for preset in PRESETS:
        checker = install(image, HscConfig.from_preset(preset, len(image)))
        for j, w in enumerate(image.words):
            result = checker.check(FetchEvent(j, image.address_of(j), w))
            assert not result.alarm
        # in any order
        for j in reversed(range(len(image))):
            assert not checker.check((image.address_of(j), image.words[j])).alarm


def test_empty_image_rejected():
    with pytest.raises(DataError):
        ProgramImage([])  # images cannot even be built empty


def test_unknown_preset():
    with pytest.raises(ParameterError):
        HscConfig.from_preset("HSEC64", 16)


def test_config_needs_members():
    with pytest.raises(ParameterError):
        HscConfig(())


def test_monotonicity_member_union(image):
    single = install(image, HscConfig.from_preset("SINGLE_HSEC32", 216))
    combined = install(image, HscConfig.from_preset("PAPER_COMBINED", 216))
    addrs = 4 * rng.integers(0, 216, size=20_000)
    instrs = rng.integers(0, 1 << 32, size=20_000)
    single_alarm = single.check_batch(addrs, instrs) != 0
    combined_alarm = combined.check_batch(addrs, instrs) != 0
    assert (combined_alarm | single_alarm == combined_alarm).all()


def test_member_order_does_not_change_alarm(image):
    forward = install(image, HscConfig.from_preset("PAPER_COMBINED", 216))
    spec32, spec8 = HscConfig.from_preset("PAPER_COMBINED", 216).members
    backward = install(image, HscConfig((spec8, spec32)))
    addrs = 4 * rng.integers(0, 300, size=10_000)
    instrs = rng.integers(0, 1 << 32, size=10_000)
    assert ((forward.check_batch(addrs, instrs) != 0)
            == (backward.check_batch(addrs, instrs) != 0)).all()


def test_collision_handling():
    image = gen_synthetic(100, seed=2)
    shallow = HscConfig((HsmSpec(ChunkingSpec(32, 1), CodeKind.hsec(), 64),))
    checker = install(image, shallow)
    assert checker.modules[0].collisions == 36
    hardened = HscConfig((HsmSpec(ChunkingSpec(32, 1), CodeKind.hsec(), 64,
                                  UnconfiguredPolicy.VALID_BIT),))
    with pytest.raises(CollisionError) as err:
        install(image, hardened)
    assert err.value.count == 36


def test_check_accepts_event_and_tuple(image):
    checker = install(image, HscConfig.from_preset("SINGLE_HSEC8", 216))
    event = FetchEvent(0, image.base, image.words[0])
    assert not checker.check(event).alarm
    assert not checker.check((image.base, image.words[0])).alarm
    assert checker.check((image.base, image.words[0] ^ 1)).alarm


def test_check_result_attribution(image):
    checker = install(image, HscConfig.from_preset("PAPER_COMBINED", 216))
    result = checker.check((image.base, image.words[0] ^ 1))
    assert result.alarm and result.alarm_members == (0, 1)


def test_batch_matches_scalar(image):
    for preset in ("PAPER_COMBINED", "CRC16"):
        for policy in UnconfiguredPolicy:
            config = HscConfig.from_preset(preset, 256, policy)
            checker = install(image, config)
            addrs = 4 * rng.integers(0, 400, size=500)
            instrs = rng.integers(0, 1 << 32, size=500)
            masks = checker.check_batch(addrs, instrs)
            for a, w, mask in zip(addrs, instrs, masks):
                result = checker.check((int(a), int(w)))
                assert result.alarm == bool(mask)
                scalar_mask = sum(1 << i for i in result.alarm_members)
                assert scalar_mask == int(mask)


def test_checker_snapshot_round_trip(image, tmp_path):
    checker = install(image, HscConfig.from_preset("PAPER_COMBINED", 216,
                                                   UnconfiguredPolicy.VALID_BIT))
    path = str(tmp_path / "checker.snap")
    checker.save(path)
    back = Checker.load(path)
    assert back.preset == "PAPER_COMBINED"
    assert back.to_bytes() == checker.to_bytes()
    addrs = 4 * rng.integers(0, 512, size=2000)
    instrs = rng.integers(0, 1 << 32, size=2000)
    assert (back.check_batch(addrs, instrs)
            == checker.check_batch(addrs, instrs)).all()


def test_checker_snapshot_rejects_garbage(image):
    checker = install(image, HscConfig.from_preset("SINGLE_HSEC8", 216))
    blob = checker.to_bytes()
    with pytest.raises(ParameterError):
        Checker.from_bytes(b"xx")
    with pytest.raises(ParameterError):
        Checker.from_bytes(blob[:20])
    with pytest.raises(ParameterError):
        Checker.from_bytes(blob[:-5])
    with pytest.raises(ParameterError):
        Checker.from_bytes(b"BOGUS" + blob[5:])


def test_concat_coupling_checker(image):
    config = HscConfig.from_preset("SINGLE_HSEC16", 216,
                                   coupling=Coupling.CONCAT)
    checker = install(image, config)
    for j in range(0, 216, 9):
        assert not checker.check((image.address_of(j), image.words[j])).alarm
    # concat closes the XOR blind spot: same-mask flips on both inputs alarm
    assert checker.check((image.base ^ 0x44, image.words[0] ^ 0x44)).alarm
