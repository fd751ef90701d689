"""Exporter conformance tests.

The exporter is verified through the consuming toolkit's surfaces: every
file must load through ``attnsqueeze.load_attn`` and profile through the
``attnsqueeze profile`` subcommand.  Models are randomly initialized local
checkpoints (saved and reloaded by path), so no hub access is needed.
"""

import json
import subprocess
import sys

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

from attnsqueeze import load_attn, measure_sparsity, read_sidecar

from attn_exporter import ExportError, ExportJob, export_attention
from attn_exporter.cli import main as cli_main

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "cat", "sat", "on", "a", "mat", "dog", "ran", "to", "store",
    "quick", "brown", "fox", ".", ",",
]

TEXTS = [
    "the cat sat on a mat .",
    "a quick brown fox ran to the store .",
    "the dog sat .",
]


def make_model_dir(root, layers, heads, hidden):
    (root / "vocab.txt").write_text("\n".join(VOCAB))
    tokenizer = BertTokenizer(str(root / "vocab.txt"))
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=hidden,
        num_hidden_layers=layers,
        num_attention_heads=heads,
        intermediate_size=2 * hidden,
        max_position_embeddings=64,
    )
    torch.manual_seed(1234)
    model_dir = root / "model"
    BertModel(config).save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return model_dir


@pytest.fixture(scope="module")
def small_model(tmp_path_factory):
    return make_model_dir(tmp_path_factory.mktemp("small"), layers=2, heads=4, hidden=32)


@pytest.fixture(scope="module")
def small_export(small_model, tmp_path_factory):
    out = tmp_path_factory.mktemp("dump")
    job = ExportJob(model=str(small_model), texts=TEXTS, out_dir=out)
    return export_attention(job)


# ---------------------------------------------------------------------------


def test_one_file_per_text(small_export):
    assert len(small_export.paths) == len(TEXTS)
    assert (small_export.layers, small_export.heads) == (2, 4)


def test_exports_load_through_primary_loader(small_export):
    for path in small_export.paths:
        tensor = load_attn(path)  # any format violation raises here
        assert tensor.layers == 2 and tensor.heads == 4
        assert tensor.tokens >= 3


def test_row_sums_within_tolerance(small_export):
    for path in small_export.paths:
        sums = load_attn(path).row_sums()
        assert sums.min() >= 0.999 and sums.max() <= 1.001


def test_sidecar_token_count_matches_header(small_export):
    for path in small_export.paths:
        meta = read_sidecar(path)
        assert meta["instance_id"] == path.stem
        assert len(meta["tokens"]) == load_attn(path).tokens
        assert meta["tokens"][0] == "[CLS]" and meta["tokens"][-1] == "[SEP]"


def test_exported_attention_is_profileable(small_export):
    # numeric sanity through a primary-side statistic
    tensor = load_attn(small_export.paths[0])
    assert 0.0 <= measure_sparsity(tensor, 1e-8).fraction < 1.0


def test_overflow_is_an_error(small_model, tmp_path):
    job = ExportJob(
        model=str(small_model),
        texts=["the cat sat on a mat ."],
        out_dir=tmp_path,
        max_len=4,
    )
    with pytest.raises(ExportError, match="exceed"):
        export_attention(job)


def test_empty_text_rejected(small_model, tmp_path):
    with pytest.raises(ExportError):
        ExportJob(model=str(small_model), texts=["ok", "  "], out_dir=tmp_path)


def test_missing_model_is_an_error(tmp_path):
    job = ExportJob(model=str(tmp_path / "nope"), texts=["the cat ."], out_dir=tmp_path)
    with pytest.raises(ExportError, match="failed to load"):
        export_attention(job)


def test_cli_roundtrip(small_model, tmp_path):
    texts = tmp_path / "texts.txt"
    texts.write_text("\n".join(TEXTS[:2]) + "\n")
    out = tmp_path / "dump"
    code = cli_main(
        ["--model", str(small_model), "--input", str(texts), "--out", str(out), "--max-len", "32"]
    )
    assert code == 0
    files = sorted(out.glob("*.attn"))
    assert len(files) == 2
    for f in files:
        load_attn(f)


def test_cli_reports_errors(small_model, tmp_path):
    texts = tmp_path / "texts.txt"
    texts.write_text(TEXTS[0] + "\n")
    code = cli_main(
        ["--model", str(small_model), "--input", str(texts), "--out", str(tmp_path / "d"), "--max-len", "2"]
    )
    assert code == 2


# ---------------------------------------------------------------------------
# base-shaped export through the primary CLI


def test_base_size_export_yields_144_head_profiles(tmp_path):
    model_dir = make_model_dir(tmp_path, layers=12, heads=12, hidden=48)
    out = tmp_path / "dump"
    job = ExportJob(model=str(model_dir), texts=TEXTS[:2], out_dir=out)
    result = export_attention(job)
    assert (result.layers, result.heads) == (12, 12)

    report_dir = tmp_path / "report"
    proc = subprocess.run(
        [
            sys.executable, "-m", "attnsqueeze.cli",
            "profile", str(out), "--pooled", "--out", str(report_dir),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    report = json.loads((report_dir / "report.json").read_text())
    assert len(report["head_profiles"]) == 144
    assert report["layers"] == 12 and report["heads"] == 12
