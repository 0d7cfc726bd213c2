import hashlib

import pytest

from conftest import REFERENCE_WORD
from rrwm.cli import main
from rrwm.watermark import Threshold


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def chip(tmp_path):
    path = tmp_path / "chip.rram"
    assert main(["new", str(path), "--cells", "8192", "--seed", "7"]) == 0
    return path


@pytest.fixture
def threshold_file(tmp_path):
    path = tmp_path / "th.txt"
    assert main(["calibrate", "--out", str(path), "--seed", "9001", "--groups", "32"]) == 0
    return path


def test_new_refuses_overwrite(chip):
    with pytest.raises(SystemExit) as info:
        main(["new", str(chip), "--cells", "8192"])
    assert info.value.code == 2
    assert main(["new", str(chip), "--cells", "8192", "--force"]) == 0


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["new", str(a), "--cells", "4096", "--seed", "3"])
    main(["new", str(b), "--cells", "4096", "--seed", "3"])
    assert sha(a) == sha(b)


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RRWM_SEED", "3")
    main(["new", str(tmp_path / "a"), "--cells", "4096"])
    main(["new", str(tmp_path / "b"), "--cells", "4096", "--seed", "3"])
    assert sha(tmp_path / "a") == sha(tmp_path / "b")


def test_characterize_zero_pairs(chip, tmp_path):
    out = tmp_path / "m.csv"
    assert main(["characterize", str(chip), "--addresses", "0:512", "--pairs", "0", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "group,stress_count,t_set_256_s,t_reset_256_s"
    assert len(lines) == 3 and all(line.split(",")[1] == "0" for line in lines[1:])


def test_characterize_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        dev = tmp_path / f"{name}.rram"
        main(["new", str(dev), "--cells", "8192", "--seed", "11"])
        out = tmp_path / f"{name}.csv"
        sweep = tmp_path / f"{name}_sweep.csv"
        main(["characterize", str(dev), "--count", "1024", "--pairs", "2000", "--every", "500",
              "--out", str(out), "--sweep-out", str(sweep), "--seed", "11"])
        outs.append((sha(out), sha(sweep)))
    assert outs[0] == outs[1]


def test_imprint_report(chip, capsys):
    assert main(["imprint", str(chip), "--watermark", REFERENCE_WORD]) == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    assert out["watermark"] == REFERENCE_WORD
    assert out["popcount"] == "17"
    assert float(out["all_bits_formula_s"]) == pytest.approx(3200.0)
    assert float(out["popcount_formula_s"]) == pytest.approx(1700.0)


def test_imprint_budget_exceeded(chip):
    assert main(["imprint", str(chip), "--watermark", REFERENCE_WORD, "--pairs", "60000"]) == 4


def test_verify_pass_fail_and_hot(chip, threshold_file, capsys):
    main(["imprint", str(chip), "--watermark", REFERENCE_WORD])
    capsys.readouterr()
    assert main(["verify", str(chip), "--threshold-file", str(threshold_file), "--expect", REFERENCE_WORD]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["verify", str(chip), "--threshold-file", str(threshold_file), "--expect", REFERENCE_WORD,
                 "--temp", "80"]) == 0
    assert main(["verify", str(chip), "--threshold-file", str(threshold_file), "--expect", "C2F740EA"]) == 2
    assert "mismatched_bits=[31]" in capsys.readouterr().out
    assert main(["verify", str(chip), "--threshold-file", str(threshold_file), "--expect", REFERENCE_WORD,
                 "--temp", "90"]) == 4


def test_verify_fresh_device_fails(tmp_path, threshold_file, capsys):
    dev = tmp_path / "fresh.rram"
    main(["new", str(dev), "--cells", "8192"])
    assert main(["verify", str(dev), "--threshold-file", str(threshold_file), "--expect", REFERENCE_WORD]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_verify_parallel_jobs(tmp_path, threshold_file, capsys):
    paths = []
    for seed in range(3):
        p = tmp_path / f"c{seed}.rram"
        main(["new", str(p), "--cells", "8192", "--seed", str(seed)])
        main(["imprint", str(p), "--watermark", REFERENCE_WORD])
        paths.append(str(p))
    capsys.readouterr()
    assert main(["verify", *paths, "--threshold-file", str(threshold_file), "--expect", REFERENCE_WORD, "--jobs", "2"]) == 0
    assert capsys.readouterr().out.count("PASS") == 3


def test_extract_and_separation_report(chip, tmp_path, capsys):
    main(["imprint", str(chip), "--watermark", REFERENCE_WORD])
    ex = tmp_path / "ex.csv"
    assert main(["extract", str(chip), "--out", str(ex)]) == 0
    capsys.readouterr()
    sep = tmp_path / "sep.csv"
    code = main(["report", "--separation", str(ex), "--watermark", REFERENCE_WORD, "--out", str(sep)])
    assert code == 0
    assert "verdict=separable" in capsys.readouterr().out
    lines = sep.read_text().splitlines()
    assert lines[0] == "i,j,d_seconds" and len(lines) == 1 + 15 * 17


@pytest.mark.parametrize("n,channel,expected", [(5000, "set", "not-separable"), (10_000, "set", "separable")])
def test_separation_verdicts(tmp_path, capsys, n, channel, expected):
    verdicts = []
    for seed in range(5):
        dev = tmp_path / f"c{seed}.rram"
        main(["new", str(dev), "--cells", "8192", "--seed", str(seed)])
        main(["imprint", str(dev), "--watermark", REFERENCE_WORD, "--pairs", str(n)])
        ex = tmp_path / f"c{seed}.csv"
        main(["extract", str(dev), "--out", str(ex)])
        capsys.readouterr()
        main(["report", "--separation", str(ex), "--watermark", REFERENCE_WORD, "--channel", channel])
        verdicts.append(capsys.readouterr().out.split("verdict=")[1].strip())
    if expected == "separable":
        assert verdicts == ["separable"] * 5
    else:
        assert expected in verdicts


def test_report_estimates(capsys):
    assert main(["report", "--estimates"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "imprint_time_s=3200" in lines and "retrieval_rate_bits_per_s=15.625" in lines
    assert "endurance_cost_percent=2" in lines


def test_report_needs_a_mode():
    with pytest.raises(SystemExit) as info:
        main(["report"])
    assert info.value.code == 2


def test_bad_image_exit_code(tmp_path):
    bad = tmp_path / "bad.rram"
    bad.write_bytes(b"NOPE" + bytes(200))
    assert main(["imprint", str(bad), "--watermark", REFERENCE_WORD]) == 3


def test_calibrate_from_csvs(chip, tmp_path):
    fresh = tmp_path / "fresh.csv"
    main(["characterize", str(chip), "--addresses", "0:2048", "--pairs", "0", "--out", str(fresh)])
    main(["imprint", str(chip), "--watermark", "FF", "--bits", "8", "--base", "4096"])
    stressed = tmp_path / "ex.csv"
    main(["extract", str(chip), "--bits", "8", "--base", "4096", "--out", str(stressed)])
    out = tmp_path / "th.txt"
    assert main(["calibrate", "--fresh", str(fresh), "--stressed", str(stressed), "--out", str(out)]) == 0
    th = Threshold.load(out)
    assert th.channel == "set" and th.margin > 0
    assert 210e-6 < th.value < 250e-6
