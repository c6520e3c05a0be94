import json

import numpy as np
import pytest

from mrfstruct.cli import main
from mrfstruct.io import (
    beta_document,
    format_grid,
    parse_grid,
    parse_spec,
    phi_document,
    read_checkpoint,
    read_trace,
    truncate_trace,
)
from mrfstruct.lattice import Dims
from mrfstruct.mrf import Grid, exact_distribution

from .helpers import ising_beta, three_phase_state


@pytest.fixture
def ising_file(tmp_path):
    dims = Dims(8, 8)
    path = tmp_path / "ising.json"
    path.write_text(json.dumps(beta_document(ising_beta(dims, 0.4), dims)))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_grid_round_trip():
    rng = np.random.default_rng(0)
    x = (rng.random((5, 7)) < 0.5).astype(np.uint8)
    observed = np.ones((5, 7), dtype=bool)
    observed[0, :2] = False
    x[~observed] = 0
    grid = Grid(x, observed)
    back = parse_grid(format_grid(grid))
    assert np.array_equal(back.x, x) and np.array_equal(back.observed, observed)


@pytest.mark.parametrize("text", ["", "dims 2 2\n01\n", "dims 2 2\n01\n0x\n", "size 2 2\n00\n00\n"])
def test_grid_parse_errors(text):
    with pytest.raises(ValueError):
        parse_grid(text)


def test_spec_round_trips():
    dims = Dims(6, 6)
    z = three_phase_state(dims)
    form, spec = parse_spec(json.loads(json.dumps(phi_document(z, dims))))
    assert form == "phi" and spec.z == z
    form, spec2 = parse_spec(json.loads(json.dumps(beta_document(spec.beta, dims))))
    assert form == "beta"
    for ct, v in spec.beta.items():
        assert spec2.beta[ct] == pytest.approx(v, abs=1e-12)


def test_spec_errors():
    dims = Dims(4, 4)
    with pytest.raises(ValueError):
        parse_spec({"form": "gamma", "dims": [4, 4]})
    with pytest.raises(ValueError):
        parse_spec({"form": "beta", "beta": []})
    dup = {"form": "beta", "dims": [4, 4], "beta": [{"type": [[0, 0]], "value": 1.0}] * 2}
    with pytest.raises(ValueError):
        parse_spec(dup)
    non_dense = {"form": "beta", "beta": [{"type": [], "value": 0}, {"type": [[0, 0], [1, 0]], "value": 1}]}
    with pytest.raises(ValueError):
        parse_spec(non_dense, dims)


def test_simulate_is_reproducible(tmp_path, ising_file):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert run("simulate", "--spec", ising_file, "--sweeps", 20, "--seed", 3, "--out", a, "-q") == 0
    assert run("simulate", "--spec", ising_file, "--sweeps", 20, "--seed", 3, "--out", b, "-q") == 0
    assert a.read_bytes() == b.read_bytes()
    assert parse_grid(a.read_text()).x.shape == (8, 8)


def test_fit_summarize_pipeline(tmp_path, ising_file, capsys):
    grid = tmp_path / "grid.txt"
    run("simulate", "--spec", ising_file, "--sweeps", 50, "--seed", 1, "--out", grid, "-q")
    trace = tmp_path / "trace.jsonl"
    assert run("fit", "--data", grid, "--iterations", 300, "--aux-burn-in", 5, "--seed", 2,
               "--out", trace, "-q") == 0
    header, records = read_trace(trace)
    assert header["dims"] == [8, 8]
    assert len(records) == 300
    acc = json.loads((tmp_path / "trace.jsonl.accept.json").read_text())
    assert acc["iterations"] == 300
    out = tmp_path / "report.json"
    assert run("summarize", "--trace", trace, "--burn-in", 100, "--out", out, "-q") == 0
    report = json.loads(out.read_text())
    assert report["n_samples"] == 200
    assert "posterior structure probabilities" in capsys.readouterr().out


def test_header_only_trace(tmp_path, ising_file):
    grid = tmp_path / "grid.txt"
    run("simulate", "--spec", ising_file, "--sweeps", 5, "--out", grid, "-q")
    trace = tmp_path / "t.jsonl"
    assert run("fit", "--data", grid, "--iterations", 0, "--out", trace, "-q") == 0
    header, records = read_trace(trace)
    assert header is not None and records == []


def test_masked_grid_runs_boundary_scans(tmp_path, caplog):
    grid = tmp_path / "grid.txt"
    rows = ["dims 6 6", "......"] + ["010101", "101010", "010101", "101010"] + ["......"]
    grid.write_text("\n".join(rows) + "\n")
    trace = tmp_path / "t.jsonl"
    with caplog.at_level("INFO"):
        assert run("fit", "--data", grid, "--iterations", 50, "--aux-burn-in", 3, "--out", trace) == 0
    acc = json.loads((tmp_path / "t.jsonl.accept.json").read_text())
    assert acc["counters"]["boundary_scans"] == 50
    assert "boundary Gibbs scans performed: 50" in caplog.text


def test_stop_and_resume_matches_single_run(tmp_path, ising_file):
    grid = tmp_path / "grid.txt"
    run("simulate", "--spec", ising_file, "--sweeps", 30, "--seed", 4, "--out", grid, "-q")
    full, part = tmp_path / "full.jsonl", tmp_path / "part.jsonl"
    common = ["--data", grid, "--iterations", 200, "--aux-burn-in", 4, "--seed", 9, "-q"]
    assert run("fit", *common, "--out", full) == 0
    ckpt = tmp_path / "part.ckpt"
    assert run("fit", *common, "--out", part, "--checkpoint", ckpt, "--stop-at", 120) == 0
    next_it, _, _, _, _ = read_checkpoint(ckpt)
    assert next_it == 120
    assert run("fit", *common, "--out", part, "--resume", ckpt) == 0
    assert full.read_bytes() == part.read_bytes()
    assert (tmp_path / "full.jsonl.accept.json").read_bytes() == (tmp_path / "part.jsonl.accept.json").read_bytes()


def test_truncate_trace(tmp_path):
    path = tmp_path / "t.jsonl"
    lines = [json.dumps({"header": {"dims": [2, 2]}})] + [json.dumps({"iter": i}) for i in range(10)]
    path.write_text("\n".join(lines) + "\n")
    truncate_trace(path, 4)
    _, records = read_trace(path)
    assert [r["iter"] for r in records] == [0, 1, 2, 3, 4]


def test_exact_command(tmp_path):
    dims = Dims(2, 2)
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps(beta_document(ising_beta(dims, 0.4), dims)))
    out = tmp_path / "exact.txt"
    assert run("exact", "--spec", spec, "--out", out, "-q") == 0
    rows = [ln.split() for ln in out.read_text().splitlines() if not ln.startswith("#")]
    probs = np.array([float(r[2]) for r in rows])
    assert len(rows) == 16 and probs.sum() == pytest.approx(1.0)
    _, parsed = parse_spec(json.loads(spec.read_text()))
    assert np.allclose(probs, exact_distribution(parsed, dims))
    assert rows[5][1] == "1010"


def test_exact_rejects_large_lattice(tmp_path, ising_file):
    assert run("exact", "--spec", ising_file, "-q") == 2


def test_convert_round_trip_is_exact(tmp_path):
    dims = Dims(6, 6)
    src = tmp_path / "phi.json"
    src.write_text(json.dumps(phi_document(three_phase_state(dims), dims)))
    beta, back = tmp_path / "beta.json", tmp_path / "back.json"
    assert run("convert", "--spec", src, "--out", beta, "-q") == 0
    assert json.loads(beta.read_text())["form"] == "beta"
    assert run("convert", "--spec", beta, "--out", back, "--tie", 1e-9, "-q") == 0
    _, a = parse_spec(json.loads(src.read_text()))
    _, b = parse_spec(json.loads(back.read_text()))
    for ct in a.beta:
        assert b.beta[ct] == pytest.approx(a.beta[ct], abs=1e-9)
    assert len(json.loads(back.read_text())["cells"]) == 6


def test_convert_ising_tie_center(tmp_path):
    dims = Dims(10, 10)
    src = tmp_path / "ising.json"
    src.write_text(json.dumps(beta_document(ising_beta(dims, 0.4), dims)))
    out = tmp_path / "phi.json"
    assert run("convert", "--spec", src, "--to", "phi", "--tie", 1e-9, "--center", "--out", out, "-q") == 0
    cells = json.loads(out.read_text())["cells"]
    values = sorted(c["phi"] for c in cells)
    assert values == pytest.approx([-1.0667, -0.2667, 1.3333], abs=5e-4)


def test_exit_codes(tmp_path, ising_file):
    assert run("simulate", "--spec", tmp_path / "missing.json", "-q") == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"form": "nope", "dims": [2, 2]}))
    assert run("simulate", "--spec", bad, "-q") == 2
    assert run("simulate", "--spec", ising_file, "--sweeps", -1, "-q") == 2


def test_seven_entry_proposals_without_covariates_rejected(tmp_path, ising_file):
    grid = tmp_path / "grid.txt"
    run("simulate", "--spec", ising_file, "--sweeps", 5, "--out", grid, "-q")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"proposal_probs": [0.1, 0.1, 0.15, 0.15, 0.2, 0.25, 0.05]}))
    trace = tmp_path / "t.jsonl"
    assert run("fit", "--data", grid, "--config", cfg, "--iterations", 5, "--out", trace, "-q") == 2
    assert not trace.exists()


def test_unknown_config_key_rejected(tmp_path, ising_file):
    grid = tmp_path / "grid.txt"
    run("simulate", "--spec", ising_file, "--sweeps", 5, "--out", grid, "-q")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sigma_q": 1.0}))
    assert run("fit", "--data", grid, "--config", cfg, "--out", tmp_path / "t.jsonl", "-q") == 2


def test_fit_with_covariates(tmp_path):
    rng = np.random.default_rng(5)
    cov = rng.normal(size=(6, 6))
    x = (cov > 0).astype(np.uint8)
    grid = tmp_path / "grid.txt"
    grid.write_text(format_grid(Grid(x)))
    layer = tmp_path / "y1.txt"
    np.savetxt(layer, cov)
    trace = tmp_path / "t.jsonl"
    assert run("fit", "--data", grid, "--covariates", layer, "--standardize", "--iterations", 50,
               "--aux-burn-in", 3, "--out", trace, "-q") == 0
    _, records = read_trace(trace)
    assert len(records[-1]["kappa"]) == 1


def test_summarize_burn_in_too_long(tmp_path, ising_file):
    grid = tmp_path / "grid.txt"
    run("simulate", "--spec", ising_file, "--sweeps", 5, "--out", grid, "-q")
    trace = tmp_path / "t.jsonl"
    run("fit", "--data", grid, "--iterations", 20, "--aux-burn-in", 2, "--out", trace, "-q")
    assert run("summarize", "--trace", trace, "--burn-in", 50, "-q") == 2
