import json

import pytest

from coxthin.cli import main


def _config(tmp_path, **sections):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 5, **sections}))
    return str(path)


def _files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_simulate_is_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["simulate", "sgcp", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b and set(a) == {"manifest.json", "observed.csv", "thinned.csv"}
    header = a["observed.csv"].decode().splitlines()[0]
    prov = json.loads(header[2:])
    assert prov["seed"] == 7 and "git" in prov and prov["config"]["seed"] == 7


@pytest.mark.parametrize("model", ["mtsgcp", "matern3"])
def test_simulate_other_models(tmp_path, model):
    assert main(["simulate", model, "--seed", "1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "observed.csv").exists()


def test_verify_colouring(tmp_path, capsys):
    assert main(["verify", "colouring", "--seed", "1", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify-colouring.json").read_text())
    assert report["passed"] and report["max_abs_error"] < 1e-10


def test_errors_are_json_on_stderr(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1, "bogus": true}')
    assert main(["simulate", "sgcp", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValidationError"
    data = tmp_path / "d.csv"
    data.write_text("x,y\n0.1,0.1\n0.2,zz\n")
    assert main(["fit", "sgcp", "--seed", "1", "--data", str(data), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "DataFormatError" and err["line"] == 3


def test_sgcp_fit_rejects_multitype_data(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("x,y,type\n0.1,0.1,a\n0.2,0.3,b\n")
    assert main(["fit", "sgcp", "--seed", "1", "--data", str(data), "--out", str(tmp_path / "o")]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "StructureError"


def test_fit_pcf_and_intensity_pipeline(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("COXTHIN_THREADS", "2")
    data = tmp_path / "d.csv"
    data.write_text("x,y,type\n10,10,a\n30,80,b\n55,20,a\n90,60,b\n70,95,a\n")
    cfg = _config(tmp_path, controls={"bdm_steps": 5, "store_latent": True, "grid_res": 8},
                  pcf={"r_values": [0.05, 0.5], "n_mc": 200, "max_draws": 3})
    out = tmp_path / "fit"
    assert main(["fit", "mtsgcp", "--config", cfg, "--data", str(data), "--rescale", "--chains", "2",
                 "--iters", "4", "--burn", "2", "--out", str(out)]) == 0
    names = set(_files(out))
    assert {"chain0.jsonl", "chain1.jsonl", "intensity_chain0_type1.csv", "manifest.json"} <= names
    traces = [str(out / "chain0.jsonl"), str(out / "chain1.jsonl")]
    assert main(["pcf", "--config", cfg, "--trace", *traces, "--out", str(tmp_path / "pcf")]) == 0
    rows = (tmp_path / "pcf" / "pcf.csv").read_text().splitlines()
    assert rows[1] == "r,pair,mean,lo95,hi95" and len(rows) == 2 + 2 * 3
    assert main(["intensity-grid", "--config", cfg, "--trace", traces[0], "--res", "4",
                 "--out", str(tmp_path / "grid")]) == 0
    assert (tmp_path / "grid" / "intensity_chain0_type2.csv").exists()


def test_chains_reproducible_across_thread_caps(tmp_path, monkeypatch):
    data = tmp_path / "d.csv"
    data.write_text("x,y\n0.1,0.1\n0.5,0.4\n")
    cfg = _config(tmp_path, controls={"bdm_steps": 3})
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("COXTHIN_THREADS", threads)
        out = tmp_path / f"t{threads}"
        assert main(["fit", "sgcp", "--config", cfg, "--data", str(data), "--chains", "2", "--iters", "3",
                     "--burn", "0", "--out", str(out)]) == 0
        outs.append((out / "chain1.jsonl").read_text().splitlines()[1:])
    assert outs[0] == outs[1]


def test_pcf_from_config_model(tmp_path):
    cfg = _config(tmp_path, model={"kind": "mtsgcp"}, pcf={"r_values": [0.1], "n_mc": 100})
    assert main(["pcf", "--config", cfg, "--out", str(tmp_path / "p")]) == 0


def test_compare_samplers_and_small_verifications(tmp_path):
    small = {"n_reps": 300, "n_sweeps": 300, "n_burn": 10, "grid_res": 16, "n_samples": 60, "n_configs": 3}
    cfg = _config(tmp_path, model={"kind": "sgcp", "lam": 3.0}, verify=small)
    assert main(["compare-samplers", "--config", cfg, "--observed", "empty", "--out", str(tmp_path / "c")]) == 0
    report = json.loads((tmp_path / "c" / "compare-samplers.json").read_text())
    assert {"bdm", "rao", "bdm_below_rao", "difference_in_se"} <= set(report["empty_probability"])
    for check in ("appendix-b", "appendix-c"):
        code = main(["verify", check, "--config", cfg, "--out", str(tmp_path / check)])
        assert code in (0, 1) and (tmp_path / check / f"verify-{check}.json").exists()
    m3 = _config(tmp_path, model={"kind": "matern3"}, verify=small)
    assert main(["verify", "matern3", "--config", m3, "--out", str(tmp_path / "m3")]) in (0, 1)
    assert main(["verify", "geweke", "--config", cfg, "--out", str(tmp_path / "g")]) in (0, 1)


def test_model_kind_mismatch(tmp_path, capsys):
    cfg = _config(tmp_path, model={"kind": "matern3"})
    assert main(["simulate", "sgcp", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "StructureError" in capsys.readouterr().err
