import json
import math
import subprocess
import sys

import numpy as np
import pytest

from opspaces.cli import main
from opspaces.experiments import (
    ExperimentConfig,
    build_context,
    candidate_signals,
    cell_smoothness,
    decomposition_roundtrip,
    estimate_operator_norm,
    format_csv,
    format_json,
    interpolation_experiment,
    multiplier_experiment,
    norms_experiment,
    space_experiment,
    stabilization_point,
    threshold,
    threshold_sweep,
    tree_experiment,
    write_report,
)
from opspaces.norms import NormSpec
from opspaces.space import build_space
from opspaces.spectral import SpectralError, spectral_decompose
from opspaces.symbols import SpectralFunction, hormander_functional, symbol_family

SMALL = {"space": {"kind": "cycle", "size": 16}, "trials": 4, "batch": 3, "betas": [1.0, 4.0],
         "alphas": [0.0], "ps": [0.5, 2.0], "qs": [2.0], "widths": [0.3, 0.1]}


@pytest.fixture(scope="module")
def small():
    cfg = ExperimentConfig.from_dict(dict(SMALL))
    return cfg, build_context(cfg)


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig.from_dict({**SMALL, "q_tilde": "inf", "seed": 9})
    path = tmp_path / "cfg.json"
    path.write_text(cfg.echo())
    back = ExperimentConfig.from_json(path)
    assert back == cfg and math.isinf(back.q_tilde)
    assert json.loads(back.echo())["q_tilde"] == "inf"
    assert ExperimentConfig().s_grid[0] == 0.25 and ExperimentConfig().s_grid[-1] == 3.0


@pytest.mark.parametrize("bad", [{"colour": 1}, {"q_tilde": 3}, {"trials": 0}, {"batch": -1}, {"ps": [0.0]}])
def test_config_rejections(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)


def test_cells_sorted():
    cfg = ExperimentConfig(alphas=[1, 0], ps=[2, 0.5], qs=[2, 1])
    assert cfg.cells() == sorted(cfg.cells()) and len(cfg.cells()) == 8


def test_threshold_formula():
    assert threshold(1.0, 2, 2) == 0.5  # 1 ^ p ^ q = 1: the s > n/2 case
    assert threshold(1.0, 0.5, 2) == 1.5
    assert threshold(2.0, 1, 0.5) == 3
    assert cell_smoothness(1.0, 2, 2, 2.0, 0.1) == pytest.approx(0.6)
    assert cell_smoothness(1.0, 2, 2, math.inf, 0.1) == pytest.approx(0.6)
    assert cell_smoothness(0.2, 2, 2, 2.0, 0.1) == pytest.approx(0.6)  # 1/q_tilde dominates


def test_identity_symbol_norm_is_one(spec64, pou, tree64):
    one = symbol_family("const")
    cands = candidate_signals(spec64, tree64, 8, 0)
    for ns in (NormSpec(0, 2, 2), NormSpec(1, 0.5, 1), NormSpec(0, 1, 2, "besov")):
        assert estimate_operator_norm(spec64, pou, one, ns, candidates=cands) == pytest.approx(1.0, abs=1e-12)


def test_spectral_oracle(spec64, pou, tree64):
    lmax = spec64.lambda_max
    F = SpectralFunction(lambda s: s**4 / lmax**2, None, "lambda^2/lambda_max^2")
    emp, mx = estimate_operator_norm(spec64, pou, F, NormSpec(0, 2, 2), tree=tree64, per_kind=True)
    lam = spec64.eigenvalues[spec64.eigenvalues > spec64.kernel_tol]
    want = float(np.max(lam**2 / lmax**2))
    assert mx["eigenvector"] == pytest.approx(want, abs=1e-9)
    assert emp == pytest.approx(want, abs=1e-9)
    assert set(mx) == {"random", "eigenvector", "atom", "molecule"}


def test_kernel_only_rejected(pou):
    spec = spectral_decompose(build_space("cycle", 8), np.zeros((8, 8)))
    with pytest.raises(SpectralError, match="ker L"):
        estimate_operator_norm(spec, pou, symbol_family("const"), NormSpec())
    with pytest.raises(ValueError):
        candidate_signals(spec, None, 0, 0)


def test_candidates_deterministic(spec64, tree64):
    X1, k1 = candidate_signals(spec64, tree64, 5, 3)
    X2, k2 = candidate_signals(spec64, tree64, 5, 3)
    assert k1 == k2 and np.array_equal(X1, X2)
    X3, _ = candidate_signals(spec64, tree64, 5, 4)
    assert not np.array_equal(X1, X3)


def test_const_symbol_ratio(small):
    cfg, ctx = small
    res = multiplier_experiment(cfg, ctx, symbols=[symbol_family("const")])
    assert res.ok
    for r in res.extra["reports"]:
        assert r.empirical_norm == pytest.approx(1.0, abs=1e-12)
        # eta * 1 is the same window at every dilation, so one t suffices
        H = hormander_functional(symbol_family("const"), s=r.s, q=2.0, t_grid=[1.0]).value
        assert r.ratio == pytest.approx(1.0 / (1.0 + H), rel=1e-6)


def test_power_imag_sweep(small):
    cfg, ctx = small
    res = multiplier_experiment(cfg, ctx)
    assert res.ok, res.checks
    assert len(res.rows) == len(cfg.betas) * len(cfg.cells())
    for r in res.extra["reports"]:
        assert r.empirical_norm >= max(r.per_trial.values())
        assert 0 < r.ratio < math.inf


def test_q_tilde_comparison():
    # on the window [1/2, 2] (even extension: measure 3) the L^2 norm is at most sqrt(3) times the sup
    tg = np.geomspace(0.05, 5, 25)
    for F in (symbol_family("power_imag", beta=4.0), symbol_family("mikhlin_bump", a=0.5, b=1.0)):
        for s in (0.6, 1.0, 1.7):
            H2 = hormander_functional(F, s=s, q=2.0, t_grid=tg, check_refinement=False).value
            Hi = hormander_functional(F, s=s, q=math.inf, t_grid=tg, check_refinement=False).value
            assert H2 <= math.sqrt(3) * Hi


def test_stabilization_point():
    s = [0.5, 1.0, 1.5]
    assert stabilization_point(s, [[1, 2], [1, 1.5], [1, 0.9]]) == 1.5
    assert stabilization_point(s, [[1, 0.5], [1, 1.5], [1, 0.9]]) == 1.5
    assert stabilization_point(s, [[1, 1], [1, 1], [1, 1]]) == 0.5
    assert stabilization_point(s, [[1, 1], [1, 1], [1, 2]]) is None


def test_sweep_flat_for_identity(small):
    # F = 1 at every width: the empirical norm does not move, so every s is stable
    cfg, ctx = small
    one = symbol_family("const")
    assert estimate_operator_norm(ctx.spec, ctx.pou, one, NormSpec(0, 0.5, 2), tree=ctx.tree) == pytest.approx(1.0)
    assert stabilization_point(cfg.s_grid, [[1.0 / 1.5] * 3 for _ in cfg.s_grid]) == cfg.s_grid[0]


def test_sweep_straddle_check(small):
    cfg, ctx = small
    bad = ExperimentConfig.from_dict({**SMALL, "s_grid": [2.0, 2.5], "ps": [2.0]})
    res = threshold_sweep(bad, ctx)
    assert not res.ok
    assert any("straddles" in c[0] and not c[1] for c in res.checks)


def test_zero_batch_report(small):
    cfg, ctx = small
    res = decomposition_roundtrip(cfg, ctx, signals=np.zeros((3, 16)))
    assert res.ok
    for r in res.rows:
        assert all(v == 0 for k, v in r.items() if k not in ("index", "O_sizes"))
    assert res.extra["band"] == (0.0, 0.0)


def test_roundtrip_small(small):
    cfg, ctx = small
    res = decomposition_roundtrip(cfg, ctx)
    assert res.ok, res.checks
    assert all(r["relative_residual"] <= 1e-8 for r in res.rows)


def test_other_experiments(small):
    cfg, ctx = small
    for fn in (interpolation_experiment, norms_experiment, space_experiment, tree_experiment):
        res = fn(cfg, ctx)
        assert res.ok, (res.name, res.checks)
        assert res.rows


def test_csv_bit_identical(small):
    cfg, _ = small
    a = format_csv(decomposition_roundtrip(cfg))
    b = format_csv(decomposition_roundtrip(ExperimentConfig.from_dict(dict(SMALL))))
    assert a == b
    c = format_csv(decomposition_roundtrip(ExperimentConfig.from_dict({**SMALL, "seed": 1})))
    assert a != c


def test_report_embeds_config_and_constants(small):
    cfg, ctx = small
    text = format_csv(space_experiment(cfg, ctx))
    lines = text.splitlines()
    assert lines[0] == "# experiment: space"
    assert any(l.startswith("# config: ") and json.loads(l[len("# config: "):]) == cfg.to_dict() for l in lines)
    assert any(l.startswith("# constants: ") and "kappa0" in l for l in lines)
    data = json.loads(format_json(space_experiment(cfg, ctx)))
    assert data["experiment"] == "space" and data["ok"] is True


def test_write_report(tmp_path, small):
    cfg, ctx = small
    res = tree_experiment(cfg, ctx)
    p = tmp_path / "out.csv"
    text = write_report(res, p)
    assert p.read_text() == text
    with pytest.raises(ValueError):
        write_report(res, None, "xml")


# CLI ----------------------------------------------------------------------

def write_cfg(tmp_path, **extra):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({**SMALL, **extra}))
    return str(p)


def test_cli_success(tmp_path, capsys):
    assert main(["tree", "--config", write_cfg(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# experiment: tree")


def test_cli_json_and_out(tmp_path):
    out = tmp_path / "r.json"
    assert main(["space", "--config", write_cfg(tmp_path), "--format", "json", "--out", str(out), "--seed", "4"]) == 0
    data = json.loads(out.read_text())
    assert data["config"]["seed"] == 4


def test_cli_failed_check_exit_1(tmp_path, capsys):
    cfg = write_cfg(tmp_path, s_grid=[2.0, 2.5], ps=[2.0], widths=[0.3])
    assert main(["sweep", "--config", cfg]) == 1
    assert "FAIL s-grid straddles threshold" in capsys.readouterr().err


def test_cli_bad_input_exit_2(tmp_path, capsys):
    assert main(["tree", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["tree", "--config", write_cfg(tmp_path, colour="red")]) == 2
    assert "unknown config keys" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "opspaces", "space", "--config", write_cfg(tmp_path)],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0, r.stderr
    assert "C_doubling" in r.stdout
