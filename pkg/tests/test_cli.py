import csv
import io
import shutil
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from qtopt.cli import main, pick_smallest
from qtopt.jpeg import QuantTableSet

DATA = Path(__file__).parent / "data"


@pytest.fixture
def tiny(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, (16, 16, 3), dtype=np.uint8)
    p = tmp_path / "tiny.png"
    Image.fromarray(arr).save(p)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def fake_run(tmp_path, rows):
    run = tmp_path / "run"
    (run / "candidates").mkdir(parents=True)
    with open(run / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "low", "high", "epoch", "ms_ssim", "size_bytes", "rate_bits", "jpeg",
                    "tables", "preview"])
        for i, (ms, size) in enumerate(rows):
            name = f"candidates/c{i}.jpg"
            (run / name).write_bytes(bytes([i]) * size)
            w.writerow([i, 0, 1, 0, ms, size, size * 8, name, "", name])
    return run


def test_optimize_smoke(tmp_path, tiny, capsys):
    out = tmp_path / "out"
    assert main(["optimize", str(tiny), "--epochs", "2", "--out", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert len(rows) >= 2
    for name in ("run_record.json", "config.txt", "timing.json", "checkpoint.json",
                 "checkpoint.bin"):
        assert (out / name).is_file()
    jpg = out / rows[1][7]
    assert jpg.name.startswith(f"bin{int(rows[1][0]):02d}_") and jpg.name.endswith("B.jpg")
    assert jpg.with_suffix(".png").is_file() and jpg.with_suffix(".json").is_file()
    Image.open(jpg).load()
    assert "bins populated" in capsys.readouterr().out


def test_flags_reach_config(tmp_path, tiny):
    out = tmp_path / "o"
    cfg = tmp_path / "c.cfg"
    cfg.write_text("epochs = 1\nseed = 9\n")
    assert main(["optimize", str(tiny), "--config", str(cfg), "--tau", "0.9",
                 "--samples", "3", "--top-frac", "0.5", "--bins-width", "0.05",
                 "--set", "lr=0.002", "--out", str(out)]) == 0
    text = (out / "config.txt").read_text()
    for line in ("epochs = 1", "seed = 9", "tau = 0.9", "samples = 3", "top_frac = 0.5",
                 "bin_width = 0.05", "lr = 0.002"):
        assert line in text


def test_exit_codes(tmp_path, tiny):
    assert main(["optimize", str(tmp_path / "missing.png"), "--out", str(tmp_path / "o")]) == 2
    assert main(["optimize", str(tiny), "--set", "tau=0", "--out", str(tmp_path / "o")]) == 2
    assert main(["optimize", str(tiny), "--config", str(tmp_path / "none.cfg")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["optimize", str(tiny), "--epochs", "1", "--out", str(blocker / "sub")]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["optimize"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["optimize", str(tiny), "--epochs", "ten"])
    assert exc.value.code == 1


def test_select_threshold_rule(tmp_path):
    run = fake_run(tmp_path, [(0.99, 40_000), (0.95, 20_000)])
    assert main(["select", str(run), "--non-interactive", "--threshold", "0.97"]) == 0
    assert (run / "final.jpg").stat().st_size == 40_000
    assert main(["select", str(run), "--non-interactive", "--threshold", "0.9",
                 "--out", str(tmp_path / "pick.jpg")]) == 0
    assert (tmp_path / "pick.jpg").stat().st_size == 20_000
    assert main(["select", str(run), "--non-interactive", "--threshold", "1.1"]) != 0


def test_select_single_and_empty(tmp_path):
    run = fake_run(tmp_path, [(0.5, 10)])
    assert main(["select", str(run), "--non-interactive", "--threshold", "0"]) == 0
    empty = fake_run(tmp_path / "e", [])
    assert main(["select", str(empty), "--non-interactive"]) != 0
    assert main(["select", str(tmp_path / "nowhere"), "--non-interactive"]) == 2


def test_select_interactive(tmp_path, monkeypatch, capsys):
    run = fake_run(tmp_path, [(0.99, 300), (0.95, 100)])
    monkeypatch.setattr("sys.stdin", io.StringIO("1\n"))
    assert main(["select", str(run)]) == 0
    listing = capsys.readouterr().out
    assert listing.index("100 B") < listing.index("300 B")  # ordered by size
    assert (run / "final.jpg").stat().st_size == 300
    monkeypatch.setattr("sys.stdin", io.StringIO("7\n"))
    assert main(["select", str(run)]) == 2


def test_pick_smallest():
    rows = [{"ms_ssim": 0.99, "size_bytes": 5}, {"ms_ssim": 0.98, "size_bytes": 3}]
    assert pick_smallest(rows, 0.985)["size_bytes"] == 5
    assert pick_smallest(rows, 0.0)["size_bytes"] == 3
    assert pick_smallest(rows, 0.999) is None


def test_encode(tmp_path, tiny):
    tj = tmp_path / "t.json"
    QuantTableSet.standard(80).save(tj)
    out = tmp_path / "e.jpg"
    assert main(["encode", str(tiny), str(tj), "--out", str(out)]) == 0
    assert Image.open(out).quantization[0][0] == QuantTableSet.standard(80).quantized_export[0, 0, 0]
    QuantTableSet.standard(80, 1, 1).save(tj)
    assert main(["encode", str(tiny), str(tj), "--out", str(out)]) == 2
    (tmp_path / "bad.json").write_text("{")
    assert main(["encode", str(tiny), str(tmp_path / "bad.json"), "--out", str(out)]) == 2


def test_compare_report(tmp_path):
    src = DATA / "coffee.png"
    copy = tmp_path / "copy.png"
    shutil.copy(src, copy)
    prog = tmp_path / "prog.jpg"
    Image.open(src).save(prog, quality=60, progressive=True)
    junk = tmp_path / "junk.jpg"
    junk.write_bytes(b"\xff\xd8garbage")
    out = tmp_path / "r.csv"
    assert main(["compare", str(src), str(copy), str(prog), str(junk), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["image_id", "method", "size_bytes", "ms_ssim", "bpp"]
    assert len(rows) == 1 + 3 + 3
    by = {r[1]: r for r in rows[1:]}
    assert float(by["copy.png"][3]) == 1.0
    assert 0.0 < float(by["prog.jpg"][3]) < 1.0  # handled by the fallback decoder
    assert by["junk.jpg"][3] == "failed"
    q50, q90 = by["annexk_q50"], by["annexk_q90"]
    assert float(q90[3]) > float(q50[3]) and int(q90[2]) > int(q50[2])
    npx = 512 * 400
    assert float(q50[4]) == pytest.approx(8 * int(q50[2]) / npx, abs=1e-6)
    assert all(r[0] == "coffee" for r in rows[1:])
