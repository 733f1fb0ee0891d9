import json

import pytest

from rnn2prog.cli import main
from rnn2prog.emit import emit_text, ripple_adder_program
from rnn2prog.pipeline import PipelineConfig
from rnn2prog.reference import ripple_adder_model
from rnn2prog.tasks import load_dataset
from test_emit import ADDER_TEXT


def test_gen_and_verify(tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    assert main(["gen", "--task", "Parity_All", "--count", "64", "--seed", "2",
                 "--out", str(data)]) == 0
    assert load_dataset(data).count == 64
    prog = tmp_path / "p.py.txt"
    prog.write_text(emit_text(ripple_adder_program()))
    assert main(["verify", "--prog", str(prog), "--task", "Binary_Addition",
                 "--count", "2048"]) == 0
    assert "solved" in capsys.readouterr().out
    assert main(["verify", "--prog", str(prog), "--task", "Parity_All", "--count", "256"]) == 1


def test_synthesize_and_extract(tmp_path, capsys):
    model = tmp_path / "m.json"
    ripple_adder_model().save(model)
    data = tmp_path / "d.jsonl"
    main(["gen", "--task", "Binary_Addition", "--count", "1024", "--out", str(data)])
    out = tmp_path / "prog.py.txt"
    assert main(["synthesize", "--model", str(model), "--data", str(data), "--out", str(out)]) == 0
    assert out.read_text() == ADDER_TEXT
    ex = tmp_path / "ex"
    assert main(["extract", "--model", str(model), "--data", str(data), "--codec", "bits",
                 "--out", str(ex)]) == 0
    assert json.loads((ex / "codec.json").read_text())["kind"] == "bits"
    capsys.readouterr()
    assert main(["symreg", "--table", str(ex / "tables.txt")]) == 0
    text = capsys.readouterr().out
    assert "next_b = b+c+d>1" in text and "y = a" in text


def test_symreg_csv(tmp_path, capsys):
    rows = ["b,c,d,carry"] + [f"{b},{c},{d},{int(b + c + d > 1)}"
                              for b in (0, 1) for c in (0, 1) for d in (0, 1)]
    csv = tmp_path / "t.csv"
    csv.write_text("\n".join(rows) + "\n")
    assert main(["symreg", "--table", str(csv)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("carry = b+c+d>1")
    assert "rpn: bc+d+<H" in out


def test_normalize_verb(tmp_path, capsys):
    model = tmp_path / "m.json"
    ripple_adder_model().save(model)
    data = tmp_path / "d.jsonl"
    main(["gen", "--task", "Binary_Addition", "--count", "256", "--out", str(data)])
    out = tmp_path / "n.json"
    assert main(["normalize", "--model", str(model), "--data", str(data), "--out", str(out),
                 "--skip", "quantize"]) == 0
    assert out.exists() and "quantize" in capsys.readouterr().out
    assert main(["normalize", "--model", str(model), "--data", str(data), "--out", str(out),
                 "--skip", "nope"]) == 2


def test_train_verb(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["train", "--task", "Current_Number", "--arch", "1,1,1,1,1", "--steps", "50",
                 "--batch-size", "64", "--test-count", "256", "--out", str(out)]) == 0
    assert out.exists() and "test accuracy" in capsys.readouterr().out


def test_bench_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    PipelineConfig(steps=300, retry_steps=0, seeds=2, batch_size=256, lr=3e-2,
                   extract_count=512, test_count=2048, verify_count=2048,
                   arbitrate_count=512).save(cfg)
    out = tmp_path / "b"
    assert main(["bench", "--tasks", "Current_Number", "--config", str(cfg),
                 "--out", str(out)]) == 0
    first = capsys.readouterr().out
    assert "Total solved: 1/1" in first
    assert PipelineConfig.load(out / "config.ini") == PipelineConfig.load(cfg)
    assert main(["report", "--dir", str(out)]) == 0
    assert capsys.readouterr().out == first


def test_listing_verbs(capsys):
    assert main(["tasks"]) == 0
    out = capsys.readouterr().out
    assert len(out.splitlines()) == 62 and "Binary_Addition" in out
    assert main(["config"]) == 0
    assert PipelineConfig.from_text(capsys.readouterr().out) == PipelineConfig()
    with pytest.raises(SystemExit):
        main(["nope"])
