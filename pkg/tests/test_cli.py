import io
import json
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from attnsqueeze import AttentionTensor, load_attn, measure_sparsity, read_spqa, store_attn
from attnsqueeze.cli import main
from attnsqueeze.codec import decode

from conftest import lognormal_softmax_tensor


def run_cli(*args):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(args))
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def attn_file(tmp_path):
    path = tmp_path / "inst.attn"
    store_attn(AttentionTensor(lognormal_softmax_tensor(2, 3, 16, seed=40)), path)
    return path


# ---------------------------------------------------------------------------
# profile


def test_profile_single_file(attn_file, tmp_path):
    out = tmp_path / "rep"
    code, _, _ = run_cli("profile", str(attn_file), "--out", str(out))
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["head_profiles"]) == 2 * 3
    assert (out / "hist_l0_h0.csv").exists()
    assert (out / "sparsity_distribution.csv").exists()


def test_profile_deterministic_output(attn_file, tmp_path):
    code, _, _ = run_cli("profile", str(attn_file), "--out", str(tmp_path / "a"))
    assert code == 0
    code, _, _ = run_cli("profile", str(attn_file), "--out", str(tmp_path / "b"))
    assert code == 0
    assert (tmp_path / "a/report.json").read_bytes() == (tmp_path / "b/report.json").read_bytes()
    assert (tmp_path / "a/hist_l1_h2.csv").read_bytes() == (tmp_path / "b/hist_l1_h2.csv").read_bytes()


def test_profile_directory_pooled(tmp_path):
    d = tmp_path / "dump"
    d.mkdir()
    for i in range(3):
        store_attn(
            AttentionTensor(lognormal_softmax_tensor(1, 2, 12, seed=50 + i)),
            d / f"i{i}.attn",
        )
    out = tmp_path / "rep"
    code, _, _ = run_cli("profile", str(d), "--pooled", "--out", str(out))
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["pooled"] is True
    assert report["instances"] == ["i0", "i1", "i2"]
    assert len(report["head_profiles"]) == 2


def test_profile_directory_per_instance(tmp_path):
    d = tmp_path / "dump"
    d.mkdir()
    for i in range(2):
        store_attn(
            AttentionTensor(lognormal_softmax_tensor(1, 2, 8, seed=60 + i)),
            d / f"i{i}.attn",
        )
    out = tmp_path / "rep"
    code, _, _ = run_cli("profile", str(d), "--out", str(out))
    assert code == 0
    for stem in ("i0", "i1"):
        report = json.loads((out / stem / "report.json").read_text())
        assert report["pooled"] is False
        assert report["instances"] == [stem]


def test_profile_truncated_input_exits_2(tmp_path):
    path = tmp_path / "bad.attn"
    good = lognormal_softmax_tensor(1, 1, 8, seed=51)
    store_attn(AttentionTensor(good), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-10])
    out = tmp_path / "rep"
    code, _, err = run_cli("profile", str(path), "--out", str(out))
    assert code == 2
    assert "bad.attn" in err and "offset" in err
    assert not (out / "report.json").exists()  # no partial report


def test_profile_env_threads(attn_file, tmp_path, monkeypatch):
    code, _, _ = run_cli("profile", str(attn_file), "--out", str(tmp_path / "a"))
    monkeypatch.setenv("ATTNSQUEEZE_THREADS", "3")
    code2, _, _ = run_cli("profile", str(attn_file), "--out", str(tmp_path / "b"))
    assert code == code2 == 0
    assert (tmp_path / "a/report.json").read_bytes() == (tmp_path / "b/report.json").read_bytes()
    monkeypatch.setenv("ATTNSQUEEZE_THREADS", "nope")
    assert run_cli("profile", str(attn_file), "--out", str(tmp_path / "c"))[0] == 64


# ---------------------------------------------------------------------------
# transform


def test_transform_prune_only(attn_file, tmp_path):
    out = tmp_path / "p.attn"
    before = attn_file.read_bytes()
    code, _, _ = run_cli("transform", str(attn_file), "--prune", "1e-3", "--out", str(out))
    assert code == 0
    assert attn_file.read_bytes() == before  # inputs never mutated
    original = load_attn(attn_file)
    pruned = load_attn(out)
    assert (
        measure_sparsity(pruned, 1e-3).fraction
        >= measure_sparsity(original, 1e-3).fraction
    )


def test_transform_quantize_to_spqa(attn_file, tmp_path):
    out = tmp_path / "q.spqa"
    code, _, _ = run_cli(
        "transform", str(attn_file), "--prune", "1e-3",
        "--quantize", "log", "--bits", "3", "--out", str(out),
    )
    assert code == 0
    tensor = decode(read_spqa(out))
    assert np.unique(tensor.values).size <= 8


def test_transform_fixed_point_through_file_layer(attn_file, tmp_path):
    first = tmp_path / "q1.spqa"
    run_cli(
        "transform", str(attn_file), "--prune", "1e-3",
        "--quantize", "log", "--bits", "3", "--out", str(first),
    )
    # decode to a dense file, transform again with the same spec
    dense = tmp_path / "q1.attn"
    store_attn(decode(read_spqa(first)), dense)
    second = tmp_path / "q2.spqa"
    run_cli(
        "transform", str(dense), "--prune", "1e-3",
        "--quantize", "log", "--bits", "3", "--out", str(second),
    )
    a = decode(read_spqa(first))
    b = decode(read_spqa(second))
    assert np.array_equal(a.values.view(np.uint32), b.values.view(np.uint32))


def test_transform_boolean_defaults_to_one_bit(attn_file, tmp_path):
    out = tmp_path / "b.spqa"
    code, _, _ = run_cli(
        "transform", str(attn_file), "--prune", "1e-3", "--quantize", "boolean",
        "--out", str(out),
    )
    assert code == 0
    s = read_spqa(out)
    assert s.spec.bits == 1
    assert set(np.unique(decode(s).values)) <= {0.0, 1.0}


def test_transform_usage_errors(attn_file, tmp_path):
    # --bits without --quantize
    code, _, err = run_cli(
        "transform", str(attn_file), "--bits", "3", "--out", str(tmp_path / "x.attn")
    )
    assert code == 64 and "--quantize" in err
    # no action at all
    assert run_cli("transform", str(attn_file), "--out", str(tmp_path / "x.attn"))[0] == 64
    # bad extension
    assert (
        run_cli("transform", str(attn_file), "--prune", "1e-3", "--out", str(tmp_path / "x.bin"))[0]
        == 64
    )
    # bits outside [1, 8]
    code, _, _ = run_cli(
        "transform", str(attn_file), "--quantize", "log", "--bits", "12",
        "--out", str(tmp_path / "x.attn"),
    )
    assert code == 64
    # spqa needs a codebook
    code, _, _ = run_cli(
        "transform", str(attn_file), "--prune", "1e-3", "--out", str(tmp_path / "x.spqa")
    )
    assert code == 64


def test_missing_input_exits_2(tmp_path):
    assert run_cli("profile", str(tmp_path / "nope.attn"), "--out", str(tmp_path / "r"))[0] == 2


# ---------------------------------------------------------------------------
# sweep


def test_sweep_rows_and_refinement(attn_file, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = run_cli(
        "sweep", str(attn_file), "--method", "log", "--bits", "2,3,4",
        "--prune", "1e-3", "--out", str(out),
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "method,bits,threshold,induced_sparsity,divergence"
    assert len(lines) == 4
    div = {int(l.split(",")[1]): float(l.split(",")[4]) for l in lines[1:]}
    assert div[4] <= div[2]


def test_sweep_bad_grid_usage_error(attn_file):
    assert run_cli("sweep", str(attn_file), "--prune", "1e-3;1e-2")[0] == 64


# ---------------------------------------------------------------------------
# footprint


def test_footprint_worked_row():
    code, out, _ = run_cli("footprint", "--n", "1000", "--sparsity", "0.80", "--bits", "3")
    assert code == 0
    lines = out.splitlines()
    assert lines[1].startswith("1000,0.8,3,bitmap_packed,1600,32000,0.95")


# ---------------------------------------------------------------------------
# toy


def test_toy_csv_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    code, _, _ = run_cli("toy", "--thresholds", "0,1e-8,1e-4,1e-2", "--out", str(a))
    assert code == 0
    run_cli("toy", "--thresholds", "0,1e-8,1e-4,1e-2", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert len(lines) == 1 + 1 + 4  # header + baseline + four thresholds
    assert lines[1].startswith("identity,")


def test_toy_quantized_sweep():
    code, out, _ = run_cli(
        "toy", "--thresholds", "0,1e-3", "--quantize", "log", "--bits", "2"
    )
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 4
    assert all(",2,log," in l for l in lines[2:])


def test_no_command_is_usage_error():
    assert run_cli()[0] == 64
