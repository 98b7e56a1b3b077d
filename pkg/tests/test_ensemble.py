"""Ensemble runner tests: determinism, reductions, spill files, audits."""

import math
import warnings

import numpy as np
import pytest

from photonloop.engine import LABEL_START, LABEL_STOP, build_engine
from photonloop.ensemble import (
    DetectionTable,
    load_records,
    run_ensemble,
    run_hom_ensemble,
    save_records,
)
from photonloop.params import PulseParams, SystemParams


def short_pulse_params(**kw):
    kw.setdefault("pulse", PulseParams(t_p=0.01))
    kw.setdefault("T", 20.0)
    return SystemParams(**kw)


def table_equal(a: DetectionTable, b: DetectionTable) -> bool:
    return (
        np.array_equal(a.traj_id, b.traj_id)
        and np.array_equal(a.time, b.time)
        and np.array_equal(a.label, b.label)
        and np.array_equal(a.mult, b.mult)
        and a.M == b.M
        and a.period == b.period
    )


def test_bit_identical_across_parallelism():
    p = short_pulse_params(tau=0.02, N=4)
    base = run_ensemble(p, M=600, master_seed=7, parallelism=1)
    for workers in (2, 4):
        other = run_ensemble(p, M=600, master_seed=7, parallelism=workers)
        assert table_equal(base.records, other.records)
        np.testing.assert_array_equal(base.mean_population, other.mean_population)
        np.testing.assert_array_equal(
            base.population_stderr, other.population_stderr
        )
        assert base.efficiency == other.efficiency


def test_seed_changes_the_sample():
    p = short_pulse_params(feedback_enabled=False)
    a = run_ensemble(p, M=50, master_seed=1)
    b = run_ensemble(p, M=50, master_seed=2)
    assert not np.array_equal(a.records.time, b.records.time)


def test_undriven_ensemble_is_empty():
    p = short_pulse_params(tau=0.02, N=4, pulse=PulseParams(t_p=0.01, area=0.0))
    res = run_ensemble(p, M=20, master_seed=5)
    assert len(res.records) == 0
    assert res.efficiency == 0.0
    assert res.mean_clicks == 0.0
    assert np.all(res.mean_population == 0)


def test_population_stderr_scales_like_root_m():
    p = short_pulse_params(feedback_enabled=False)
    small = run_ensemble(p, M=400, master_seed=3)
    big = run_ensemble(p, M=1600, master_seed=3)
    sl = small.population_stderr
    bg = big.population_stderr
    mask = bg > 1e-4
    ratio = np.mean(sl[mask] / bg[mask])
    assert ratio == pytest.approx(2.0, rel=0.25)


def test_efficiency_consistent_between_seeds():
    p = short_pulse_params(feedback_enabled=False, gamma0=0.1)
    a = run_ensemble(p, M=2000, master_seed=11)
    b = run_ensemble(p, M=2000, master_seed=12)
    comb = math.hypot(a.efficiency_stderr, b.efficiency_stderr)
    assert abs(a.efficiency - b.efficiency) < 5 * comb
    # branching toward the detected waveguide mode
    assert a.efficiency == pytest.approx(1 / 1.1, abs=5 * a.efficiency_stderr + 0.01)


def test_spill_file_round_trip(tmp_path):
    p = short_pulse_params(feedback_enabled=False)
    path = tmp_path / "records.bin"
    res = run_ensemble(p, M=100, master_seed=9, spill_path=path)
    assert path.exists()
    loaded = load_records(path)
    assert table_equal(res.records, loaded)

    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(ValueError, match="not a detection-record file"):
        load_records(bad)


def test_save_records_direct_round_trip(tmp_path):
    table = DetectionTable(
        traj_id=np.array([0, 0, 3], dtype=np.uint64),
        time=np.array([1.5, 2.5, 0.25]),
        label=np.array([0, 0, 0], dtype=np.uint8),
        mult=np.array([1, 2, 1], dtype=np.uint8),
        M=4,
        period=20.0,
    )
    path = tmp_path / "t.bin"
    save_records(table, path)
    assert table_equal(table, load_records(path))


def test_window_warning_when_period_too_short():
    p = short_pulse_params(feedback_enabled=False, T=2.0)
    with pytest.warns(UserWarning, match="window warning"):
        res = run_ensemble(p, M=10, master_seed=1)
    assert any("window warning" in w for w in res.warnings)


def test_cutoff_warning_when_truncating():
    # a slow pulse re-excites the emitter while the first photon is still in
    # the long loop, so the n_max = 1 cutoff visibly clips the state
    p = SystemParams(tau=0.4, N=40, n_max=1, pulse=PulseParams(t_p=0.4), T=20.0)
    with pytest.warns(UserWarning, match="cutoff warning"):
        res = run_ensemble(p, M=30, master_seed=1)
    assert res.truncation_mean > 1e-3


def test_step_size_warning_for_fast_jumps():
    p = short_pulse_params(feedback_enabled=False, gamma_prime=25.0)
    with pytest.warns(UserWarning, match="step-size warning"):
        res = run_ensemble(p, M=5, master_seed=1)
    assert res.pjump_max > 0.1


def test_no_warnings_on_clean_run():
    p = short_pulse_params(tau=0.02, N=4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = run_ensemble(p, M=30, master_seed=1)
    assert res.warnings == []


def test_hom_ensemble_labels_and_rates():
    p = short_pulse_params(tau=0.02, N=4)
    res = run_hom_ensemble(p, M=300, master_seed=6)
    assert res.n_copies == 2
    assert set(np.unique(res.records.label)) <= {LABEL_START, LABEL_STOP}
    assert res.mean_clicks == pytest.approx(2.0, abs=0.05)

    solo = run_hom_ensemble(p, M=300, master_seed=6, drive_mask=(True, False))
    assert solo.mean_clicks == pytest.approx(1.0, abs=0.05)


def test_input_validation():
    p = short_pulse_params(feedback_enabled=False)
    with pytest.raises(ValueError, match="M must be"):
        run_ensemble(p, M=0, master_seed=1)
    with pytest.raises(ValueError, match="parallelism"):
        run_ensemble(p, M=10, master_seed=1, parallelism=0)
