import csv
import io

import numpy as np
import pytest

from isaxsearch.cli import CSV_COLUMNS, main
from isaxsearch.data import generate_random_walk, save_dataset


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data = generate_random_walk(2000, 64, seed=21, znorm=True)
    save_dataset(d / "data.bin", data)
    save_dataset(d / "queries.bin", generate_random_walk(6, 64, seed=22, znorm=True))
    save_dataset(d / "members.bin", data[[3, 500, 1999]])
    return d


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestGenerate:
    def test_size_and_determinism(self, tmp_path, capsys):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        code, out, _ = run(capsys, "generate", "--count", 1000, "--length", 256, "--seed", 4, "--out", a)
        assert code == 0 and a.stat().st_size == 1_024_000 and "bytes=1024000" in out
        run(capsys, "generate", "--count", 1000, "--length", 256, "--seed", 4, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_zero_count(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--count", "0", "--length", "8", "--out", str(tmp_path / "x")])
        assert exc.value.code != 0


class TestQuery:
    def test_members_have_zero_distance(self, files, capsys):
        code, out, _ = run(capsys, "query", "--data", files / "data.bin", "--queries", files / "members.bin",
                           "--length", 64, "--segments", 8, "--leaf-size", 50, "--index-workers", 2,
                           "--search-workers", 2)
        lines = [ln for ln in out.splitlines() if ln.startswith("query=")]
        assert code == 0 and len(lines) == 3
        assert all(" dist=0 " in ln for ln in lines)
        assert [ln.split("position=")[1].split()[0] for ln in lines] == ["3", "500", "1999"]

    @pytest.mark.parametrize("extra", [[], ["--measure", "dtw", "--window-frac", "0.1"],
                                       ["--mode", "sq", "--search-workers", "3"]])
    def test_oracle_check(self, files, capsys, extra):
        code, out, _ = run(capsys, "query", "--data", files / "data.bin", "--queries", files / "queries.bin",
                           "--length", 64, "--segments", 8, "--leaf-size", 50, "--stats", "--oracle-check",
                           *extra)
        assert code == 0
        assert out.count("oracle=MATCH") == 6 and "MISMATCH" not in out
        assert "real_dist_calcs=" in out and out.startswith("build_ns=")
        if extra[:2] == ["--measure", "dtw"]:
            assert "measure=dtw(6)" in out

    def test_bad_file(self, files, tmp_path, capsys):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"\0" * 10)
        code, out, err = run(capsys, "query", "--data", bad, "--queries", files / "queries.bin", "--length", 64)
        assert code != 0 and "error:" in err and out == ""


class TestBench:
    ARGS = ["--length", 64, "--segments", 8, "--max-queries", 3, "--search-workers", 1]

    def test_rows_per_configuration(self, files, capsys):
        code, out, _ = run(capsys, "bench", "--data", files / "data.bin", "--queries", files / "queries.bin",
                           *self.ARGS, "--index-workers", "1,2", "--leaf-size", "20,80", "--mode", "sq,mq",
                           "--queues", "4")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 2 * 2 * 2
        assert list(rows[0]) == CSV_COLUMNS
        assert {r["mode"] for r in rows} == {"sq", "mq"}
        assert {r["n_queues"] for r in rows if r["mode"] == "sq"} == {"1"}

    def test_counts_repeatable(self, files, tmp_path, capsys):
        outs = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            run(capsys, "bench", "--data", files / "data.bin", "--queries", files / "queries.bin",
                *self.ARGS, "--leaf-size", "30,120", "--csv", path)
            outs.append(list(csv.DictReader(path.open())))
        counters = CSV_COLUMNS[CSV_COLUMNS.index("lb_node_calcs"):]
        for a, b in zip(*outs):
            assert [a[c] for c in counters] == [b[c] for c in counters]


class TestValidate:
    def test_healthy(self, files, capsys):
        code, out, _ = run(capsys, "validate", "--data", files / "data.bin", "--length", 64, "--segments", 8)
        assert code == 0 and "0 violations" in out and "total_entries=2000" in out

    def test_tiny_leaves(self, files, capsys):
        _, wide, _ = run(capsys, "validate", "--data", files / "data.bin", "--length", 64, "--segments", 8)
        code, out, _ = run(capsys, "validate", "--data", files / "data.bin", "--length", 64, "--segments", 8,
                           "--leaf-size", 2, "--index-workers", 3)
        depth = lambda text: int(text.split("max_depth=")[1].split()[0])  # noqa: E731
        assert code == 0 and "0 violations" in out and depth(out) > depth(wide)

    def test_padding_reported(self, tmp_path, capsys, caplog):
        path = tmp_path / "odd.bin"
        save_dataset(path, np.random.default_rng(0).standard_normal((50, 30)))
        code, out, _ = run(capsys, "validate", "--data", path, "--length", 30, "--segments", 8)
        assert code == 0 and "0 violations" in out
        assert "padded series from 30 to 32" in caplog.text
