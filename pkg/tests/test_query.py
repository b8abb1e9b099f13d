"""Engine answers versus an ordered-dict oracle under mixed workloads."""

import random

import pytest

from lsmclab import LsmEngine, PRESET_NAMES

from conftest import key, small_config, value


def run_against_oracle(tmp_path, strategy, seed, ops=600, d_th=None):
    cfg = small_config(delete_persistence_threshold=d_th)
    eng = LsmEngine(str(tmp_path), cfg, strategy, debug_checks=True)
    rng = random.Random(seed)
    oracle: dict[bytes, bytes] = {}
    domain = 400

    for step in range(ops):
        roll = rng.random()
        k = key(2 * rng.randrange(domain))
        if roll < 0.55:
            v = value(step)
            eng.put(k, v)
            oracle[k] = v
        elif roll < 0.70:
            eng.delete(k)
            oracle.pop(k, None)
        elif roll < 0.90:
            probe = key(rng.randrange(2 * domain))
            assert eng.get(probe) == oracle.get(probe), (strategy, step, probe)
        else:
            lo = 2 * rng.randrange(domain)
            hi = lo + rng.randrange(1, 80)
            got = eng.range_scan(key(lo), key(hi))
            want = sorted(
                (k, v) for k, v in oracle.items() if key(lo) <= k < key(hi)
            )
            assert got == want, (strategy, step, lo, hi)

    for k, v in list(oracle.items())[:50]:
        assert eng.get(k) == v
    eng.close()


@pytest.mark.parametrize("strategy", PRESET_NAMES)
def test_oracle_equivalence_all_presets(tmp_path, strategy):
    d_th = 300 if strategy == "tsa" else None
    run_against_oracle(tmp_path / strategy, strategy, seed=11, d_th=d_th)


def test_oracle_equivalence_more_seeds(tmp_path):
    for seed in (1, 2, 3):
        run_against_oracle(tmp_path / str(seed), "lo1", seed=seed, ops=400)


def test_scan_full_key_space_matches_oracle(tmp_path):
    cfg = small_config()
    eng = LsmEngine(str(tmp_path), cfg, "tier", debug_checks=True)
    oracle = {}
    for i in range(5 * cfg.entries_per_buffer):
        k = key(2 * (i % 50))
        v = value(i)
        eng.put(k, v)
        oracle[k] = v
    got = eng.range_scan(b"0", b"9" * 10)
    assert got == sorted(oracle.items())
    eng.close()
