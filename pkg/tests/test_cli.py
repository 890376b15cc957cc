import math

from jagq.cli import main

from conftest import DATASET_ID

LISTING = (f'From({DATASET_ID}) |> Get("Electrons") '
           '|> Where(p0 => p0.pt > 50000 && Abs(p0.eta) < 1.5) '
           '|> Select(p0 => p0.pt / 1000)')


def run_cli(args):
    return main(args)


def test_histogram_csv(dataset_dir, tmp_path, capsys):
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", LISTING, "--hist", "--bins", "50",
                    "--range", "0,100", "--cache-dir", str(tmp_path / "c")])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count"
    assert len(lines) == 51


def test_histogram_matches_oracle_binning(dataset_dir, tmp_path, capsys, events):
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", LISTING, "--hist", "--bins", "50",
                    "--range", "0,100", "--cache-dir", str(tmp_path / "c")])
    assert code == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    cli_counts = [int(r.split(",")[2]) for r in rows]
    expected = [0] * 50
    width = 100.0 / 50
    for event in events:
        for ele in event["Electrons"]:
            if ele["pt"] > 50000.0 and abs(ele["eta"]) < 1.5:
                k = math.floor((ele["pt"] / 1000.0) / width)
                if 0 <= k < 50:
                    expected[k] += 1
    assert cli_counts == expected


def test_backends_produce_identical_files(dataset_dir, tmp_path):
    outputs = {}
    for mode in ("split", "all-local"):
        out = tmp_path / f"{mode}.csv"
        code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                        "--query", LISTING, "--backend", mode,
                        "--out", str(out), "--cache-dir", str(tmp_path / "c")])
        assert code == 0
        outputs[mode] = out.read_bytes()
    assert outputs["split"] == outputs["all-local"]


def test_plan_dump(dataset_dir, tmp_path, capsys):
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", LISTING, "--plan", "--cache-dir", str(tmp_path / "c")])
    assert code == 0
    out = capsys.readouterr().out
    assert "backend=remote" in out and "backend=local" in out


def test_single_bin_empty_result(dataset_dir, tmp_path, capsys):
    query = (f'From({DATASET_ID}) |> Get("Electrons") '
             '|> Where(p0 => p0.pt > 1000000000) |> Select(p0 => p0.pt)')
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", query, "--hist", "--bins", "1",
                    "--range", "0,1", "--cache-dir", str(tmp_path / "c")])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[1].endswith(",0")


def test_parse_error_exit_code(dataset_dir, tmp_path, capsys):
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", "From(x) |> bogus", "--cache-dir", str(tmp_path / "c")])
    assert code == 2


def test_plan_error_exit_code(dataset_dir, tmp_path, capsys):
    query = f'From({DATASET_ID}) |> Get("Muons")'
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", query, "--cache-dir", str(tmp_path / "c")])
    assert code == 3


def test_execution_error_exit_code(dataset_dir, tmp_path, capsys):
    query = f'From(localds://missing) |> Get("Electrons")'
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", query, "--cache-dir", str(tmp_path / "c")])
    assert code == 4


def test_dataset_flag_overrides_from(dataset_dir, tmp_path, capsys):
    query = 'From(placeholder) |> Get("Electrons") |> Count()'
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", query, "--dataset", DATASET_ID,
                    "--cache-dir", str(tmp_path / "c")])
    assert code == 0


def test_query_file_and_value_dump(dataset_dir, tmp_path):
    qfile = tmp_path / "q.jq"
    qfile.write_text(f'From({DATASET_ID}) |> Get("Electrons") |> Count()\n')
    out = tmp_path / "counts.csv"
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query-file", str(qfile), "--out", str(out),
                    "--cache-dir", str(tmp_path / "c")])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "event,value"
    assert len(lines) == 201


def test_cache_env_var(dataset_dir, tmp_path, monkeypatch, capsys):
    cache = tmp_path / "envcache"
    monkeypatch.setenv("JQ_CACHE_DIR", str(cache))
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", LISTING])
    assert code == 0
    assert cache.exists()


def test_generate_subcommand(tmp_path):
    out = tmp_path / "sample.events"
    code = run_cli(["generate", "--seed", "3", "--events", "10",
                    "--out", str(out), "--schema", str(tmp_path / "s.schema")])
    assert code == 0
    assert out.exists() and (tmp_path / "sample.events.labels").exists()
    assert (tmp_path / "s.schema").exists()


def test_record_dump(dataset_dir, tmp_path):
    query = f'From({DATASET_ID}) |> Get("Jets")'
    out = tmp_path / "jets.csv"
    code = run_cli(["run", "--registry", str(dataset_dir["registry"]),
                    "--query", query, "--out", str(out),
                    "--cache-dir", str(tmp_path / "c")])
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header == "event,i0,pt,eta,phi,isGood"
