import json

import numpy as np
import pytest

from subband_svm.cli import main
from subband_svm.filterbank import design_cmfb


def write_config(tmp_path, **over):
    cfg = {
        "corpus": {"synthetic": {"n_classes": 3}, "seed": 5, "n_train": 6, "n_dev": 6, "n_test": 3},
        "front_ends": ["mfcc", "subband", "fused"],
        "regimes": ["anechoic"],
        "snr_grid": ["quiet", 0],
        "S": 4,
        "gmm_components": 4,
        "dev_fraction": 0.5,
        "output_dir": str(tmp_path / "out"),
        "cache_dir": str(tmp_path / "cache"),
    }
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_dump_taps(capsys):
    assert main(["prepare", "--dump-taps", "4"]) == 0
    rows = [list(map(float, l.split())) for l in capsys.readouterr().out.split("\n") if l.strip()]
    assert np.allclose(np.array(rows), design_cmfb(4).filters, atol=1e-12)


def test_prepare_synthetic_round_trips(tmp_path, capsys):
    assert main(["prepare", "--synthetic", str(tmp_path / "c"), "--classes", "3", "--n-utterances", "4"]) == 0
    assert "wrote 4 utterances" in capsys.readouterr().out
    assert main(["prepare", "--audio-dir", str(tmp_path / "c"),
                 "--alignment-dir", str(tmp_path / "c"),
                 "--class-map", str(tmp_path / "c" / "classes.map")]) == 0
    assert "loaded 4 utterances" in capsys.readouterr().out


def test_prepare_without_source_is_usage_error(capsys):
    assert main(["prepare"]) == 2


def test_errors_exit_with_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": "red"}))
    assert main(["sweep", "--config", str(bad)]) == 1
    assert "unknown config keys" in capsys.readouterr().err
    assert main(["report", str(tmp_path / "missing.csv")]) == 1


def test_end_to_end(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["train-base", "--config", str(cfg), "--save", str(tmp_path / "base")]) == 0
    assert main(["train-mfcc", "--config", str(cfg)]) == 0
    assert main(["train-meta", "--config", str(cfg), "--weights", str(tmp_path / "w")]) == 0
    capsys.readouterr()
    assert main(["evaluate", "--config", str(cfg), "--at", "0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [l.split()[0] for l in lines] == ["mfcc", "subband", "fused"]
    assert main(["sweep", "--config", str(cfg), "--lambda", "0"]) == 0
    results = tmp_path / "out" / "results.csv"
    assert len(results.read_text().splitlines()) == 1 + 3 * 2
    capsys.readouterr()
    assert main(["report", str(results)]) == 0
    assert capsys.readouterr().out.startswith("snr_db mfcc subband fused")
