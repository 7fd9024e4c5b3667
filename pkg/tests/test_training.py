"""Alternating trainer: update isolation, logging, runs, ablations."""

import math

import numpy as np
import pytest

from lcd import trainer
from lcd.dataio import gen_shapes
from lcd.lcdloss import init_lcd_params
from lcd.reconnet import init_recon_params
from lcd.trainer import (
    ABLATION_VARIANTS,
    CSV_HEADER,
    TrainConfig,
    TrainingDiverged,
    ablate,
    evaluate,
    run,
    sweep,
    train_step,
    variant_config,
)

from conftest import tiny_config


def _nets(points=24, seed=0):
    from lcd.lcdloss import SCORE_BIAS_INIT

    recon = init_recon_params(seed=seed, n_points=points, enc_widths=(8, 12), dec_widths=(12,))
    lcd = init_lcd_params(
        seed=seed + 1, feat_widths=(6, 8), head_widths=(8,), score_bias=SCORE_BIAS_INIT
    )
    return recon, lcd


def _batch(points=24, count=2, seed=3):
    ds = gen_shapes(("sphere", "cube"), count=count, points=points, seed=seed)
    return ds.clouds


def _snapshot(params):
    return {n: params[n].data.copy() for n in params.names()}


def _bit_equal(params, snap):
    return all(np.array_equal(params[n].data, snap[n]) for n in params.names())


def test_validate_rejects_bad_fields():
    bad = [
        dict(loss="emd"),
        dict(iters=0),
        dict(batch=0),
        dict(points=7),
        dict(count=1),
        dict(lr_recon=0.0),
        dict(lr_lcd=-1.0),
        dict(sigma=0.0),
        dict(sigma_r=0.0),
        dict(eval_interval=0),
        dict(eval_fraction=0.0),
        dict(eval_fraction=1.0),
        dict(backend="octree"),
        dict(noise_std=-0.1),
        dict(families=()),
    ]
    for overrides in bad:
        with pytest.raises(ValueError):
            tiny_config(**overrides).validate()
    tiny_config().validate()  # baseline is fine


def test_train_step_zero_lr_leaves_both_nets_bitwise_unchanged():
    recon, lcd = _nets()
    config = tiny_config(lr_recon=0.0, lr_lcd=0.0)
    r_snap, l_snap = _snapshot(recon), _snapshot(lcd)
    train_step(_batch(), lcd, recon, config)
    assert _bit_equal(recon, r_snap)
    assert _bit_equal(lcd, l_snap)


def test_train_step_updates_are_isolated_per_phase():
    recon, lcd = _nets()
    config = tiny_config(lr_recon=0.0)
    r_snap, l_snap = _snapshot(recon), _snapshot(lcd)
    train_step(_batch(), lcd, recon, config)
    assert _bit_equal(recon, r_snap)  # only the weighting should move
    assert not _bit_equal(lcd, l_snap)

    recon, lcd = _nets()
    config = tiny_config(lr_lcd=0.0)
    r_snap, l_snap = _snapshot(recon), _snapshot(lcd)
    train_step(_batch(), lcd, recon, config)
    assert not _bit_equal(recon, r_snap)
    assert _bit_equal(lcd, l_snap)


def test_cd_mode_never_touches_weighting_params():
    recon, lcd = _nets()
    config = tiny_config(loss="cd")
    l_snap = _snapshot(lcd)
    rec = train_step(_batch(), lcd, recon, config)
    assert _bit_equal(lcd, l_snap)
    assert rec.l_lcd is None
    assert rec.l_r is not None and rec.l_r > 0.0


def test_lcd_mode_requires_weighting_params():
    recon, _ = _nets()
    with pytest.raises(ValueError):
        train_step(_batch(), None, recon, tiny_config())
    # plain-chamfer mode runs fine without them
    train_step(_batch(), None, recon, tiny_config(loss="cd"))


def test_logged_losses_form_an_exact_pair():
    recon, lcd = _nets()
    config = tiny_config()
    rec = train_step(_batch(), lcd, recon, config)
    assert rec.l_lcd == -math.log(rec.l_r + config.sigma_r)

    recon, lcd = _nets()
    rec = train_step(_batch(), lcd, recon, tiny_config(no_log=True))
    assert rec.l_lcd == -rec.l_r


def test_train_step_is_deterministic():
    a = []
    for _ in range(2):
        recon, lcd = _nets()
        rec = train_step(_batch(), lcd, recon, tiny_config())
        a.append((rec.l_r, rec.l_lcd, _snapshot(recon), _snapshot(lcd)))
    assert a[0][0] == a[1][0] and a[0][1] == a[1][1]
    for n in a[0][2]:
        assert np.array_equal(a[0][2][n], a[1][2][n])
    for n in a[0][3]:
        assert np.array_equal(a[0][3][n], a[1][3][n])


def test_train_step_raises_on_nonfinite_reconstruction():
    for loss in ("lcd", "cd"):
        recon, lcd = _nets()
        recon["dec.w0"].data[:] = 1e308
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDiverged) as info:
                train_step(_batch(), lcd, recon, tiny_config(loss=loss))
        assert "reconstruction output" in str(info.value)


def test_evaluate_per_family_mean_matches_overall():
    recon, _ = _nets(points=16)
    ds = gen_shapes(("sphere", "cube"), count=5, points=16, seed=4)
    ev = evaluate(recon, ds)
    assert set(ev.per_family) == {"sphere", "cube"}
    weighted = (3 * ev.per_family["sphere"].cd + 2 * ev.per_family["cube"].cd) / 5
    assert abs(ev.cd - weighted) < 1e-12
    assert ev.cd <= ev.hd
    with pytest.raises(ValueError):
        evaluate(recon, gen_shapes(("sphere",), count=2, points=16, seed=0).__class__([], []))


def test_run_records_and_files(tmp_path):
    config = tiny_config(iters=5, eval_interval=2, out=str(tmp_path / "r"))
    result = run(config)
    iters = [r.iteration for r in result.records]
    assert iters == [0, 2, 4, 5]  # eval points plus the forced final row
    assert all(r.cd is not None and np.isfinite(r.cd) for r in result.records)
    assert result.records[0].l_r is None  # no step happened yet

    out = tmp_path / "r"
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + len(result.records)
    assert lines[1].startswith("0,") and lines[1].endswith(",,,")
    for line in lines[1:]:
        assert len(line.split(",")) == 7
        assert line.split(",")[6] == ""  # timing opt-in keeps the CSV stable

    echo = (out / "config.txt").read_text()
    assert "sigma = 0.01\n" in echo
    assert "loss = lcd\n" in echo
    assert (out / "ckpt_recon.txt").exists()
    assert (out / "ckpt_lcd.txt").exists()
    timing = (out / "timing.txt").read_text()
    assert timing.startswith("iterations = 5\n")
    assert "wall_seconds" in timing and "ms_per_iter" in timing


def test_run_same_seed_gives_byte_identical_csv(tmp_path):
    config = tiny_config(iters=4, eval_interval=2)
    a = run(TrainConfig(**{**config.__dict__, "out": str(tmp_path / "a")}))
    b = run(TrainConfig(**{**config.__dict__, "out": str(tmp_path / "b")}))
    csv_a = (tmp_path / "a" / "metrics.csv").read_bytes()
    csv_b = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert csv_a == csv_b
    ck_a = (tmp_path / "a" / "ckpt_recon.txt").read_bytes()
    ck_b = (tmp_path / "b" / "ckpt_recon.txt").read_bytes()
    assert ck_a == ck_b
    c = run(TrainConfig(**{**config.__dict__, "seed": 1, "out": str(tmp_path / "c")}))
    assert (tmp_path / "c" / "metrics.csv").read_bytes() != csv_a


def test_run_timing_csv_opt_in(tmp_path):
    config = tiny_config(iters=2, eval_interval=1, timing_csv=True, out=str(tmp_path / "t"))
    run(config)
    lines = (tmp_path / "t" / "metrics.csv").read_text().splitlines()
    row = lines[2].split(",")
    assert row[6] != "" and float(row[6]) > 0.0


def test_run_cd_mode_leaves_l_lcd_blank(tmp_path):
    config = tiny_config(loss="cd", iters=2, eval_interval=1, out=str(tmp_path / "cd"))
    result = run(config)
    assert result.lcd_params is None
    assert not (tmp_path / "cd" / "ckpt_lcd.txt").exists()
    for line in (tmp_path / "cd" / "metrics.csv").read_text().splitlines()[2:]:
        fields = line.split(",")
        assert fields[5] == ""  # l_lcd undefined in plain-chamfer mode
        assert fields[4] != ""


def test_run_validates_config():
    with pytest.raises(ValueError):
        run(tiny_config(lr_recon=0.0))


def test_run_works_when_batch_exceeds_training_set():
    result = run(tiny_config(count=3, batch=6, iters=2))
    assert result.final.iteration == 2


def test_run_uses_saved_dataset(tmp_path):
    from lcd.dataio import save_dataset

    ds = gen_shapes(("sphere", "torus"), count=6, points=24, seed=11)
    save_dataset(tmp_path / "data", ds)
    config = tiny_config(data=str(tmp_path / "data"), iters=2)
    result = run(config)
    assert result.final.iteration == 2


def test_run_dumps_divergence_report(tmp_path, monkeypatch):
    def boom(batch, lcd_params, recon_params, config):
        raise TrainingDiverged(3, "weighting", float("nan"), batch, {"recon": 1.0})

    monkeypatch.setattr(trainer, "train_step", boom)
    config = tiny_config(iters=4, out=str(tmp_path / "d"))
    with pytest.raises(TrainingDiverged):
        run(config)
    report = (tmp_path / "d" / "diverged.txt").read_text()
    assert "iteration" in report and "weighting" in report


def test_variant_config_switches():
    base = tiny_config()
    assert variant_config(base, "cd").loss == "cd"
    full = variant_config(base, "lcd_full")
    assert (full.loss, full.no_siacon, full.no_log) == ("lcd", False, False)
    assert variant_config(base, "lcd_no_siacon").no_siacon
    assert variant_config(base, "lcd_no_log").no_log
    with pytest.raises(ValueError):
        variant_config(base, "lcd_extra")


def test_ablate_layout_and_median_recomputability(tmp_path):
    config = tiny_config(iters=3, eval_interval=3, out=str(tmp_path / "ab"))
    rows = ablate(config, ["cd", "lcd_full"], n_seeds=3)
    assert [r.key for r in rows] == ["cd", "lcd_full"]
    assert all(r.seeds == 3 for r in rows)

    out = tmp_path / "ab"
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "variant,cd,mcd,hd,seeds"
    assert len(summary) == 3
    for variant in ("cd", "lcd_full"):
        finals = []
        for seed in range(3):
            csv = (out / f"{variant}_seed{seed}" / "metrics.csv").read_text().splitlines()
            finals.append(float(csv[-1].split(",")[1]))
        finals.sort()
        row = next(r for r in rows if r.key == variant)
        assert row.cd == finals[1]  # median reconstructs exactly from the CSVs


def test_ablate_validates_variants():
    config = tiny_config(iters=2)
    with pytest.raises(ValueError):
        ablate(config, ["warp"], n_seeds=1)
    with pytest.raises(ValueError):
        ablate(config, [], n_seeds=1)
    with pytest.raises(ValueError):
        ablate(config, ["cd"], n_seeds=0)
    assert set(ABLATION_VARIANTS) == {"cd", "lcd_no_siacon", "lcd_no_log", "lcd_full"}


def test_ablate_cd_row_matches_direct_run(tmp_path):
    config = tiny_config(iters=3, eval_interval=3)
    rows = ablate(config, ["cd"], n_seeds=1)
    direct = run(variant_config(config, "cd"))
    assert rows[0].cd == float("%.6g" % direct.final.cd)


def test_sweep_files_and_keys(tmp_path):
    config = tiny_config(iters=2, eval_interval=2, out=str(tmp_path / "sw"))
    rows = sweep(config, "sigma", [0.001, 0.1], n_seeds=1)
    assert [r.key for r in rows] == ["0.001", "0.1"]
    out = tmp_path / "sw"
    assert (out / "sweep_sigma_0.001_seed0" / "metrics.csv").exists()
    assert (out / "sweep_sigma_0.1_seed0" / "metrics.csv").exists()
    summary = (out / "summary_sigma.csv").read_text().splitlines()
    assert summary[0] == "sigma,cd,mcd,hd,seeds"
    assert len(summary) == 3

    rows = sweep(tiny_config(iters=2), "lr-lcd", [2e-3])
    assert rows[0].key == "0.002"
    with pytest.raises(ValueError):
        sweep(config, "batch", [1, 2])
    with pytest.raises(ValueError):
        sweep(config, "sigma", [])


def test_sweep_overrides_loss_mode_to_full_lcd(tmp_path):
    config = tiny_config(loss="cd", iters=2, out=str(tmp_path / "sw2"))
    sweep(config, "sigma", [0.01], n_seeds=1)
    echo = (tmp_path / "sw2" / "sweep_sigma_0.01_seed0" / "config.txt").read_text()
    assert "loss = lcd\n" in echo
