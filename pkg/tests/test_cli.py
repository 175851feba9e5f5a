import xml.etree.ElementTree as ET

import numpy as np
import pytest

from abreu import cli
from abreu import report as R
from abreu.config import OUTPUT_ENV, parse_config, parse_config_text
from abreu.errors import ParseError, ValidationError

SMALL = "n = 17\ncount = 4\ntiming = 0\n"


def write_cfg(tmp_path, body, name="run.cfg"):
    path = tmp_path / name
    path.write_text(body + f"output = {tmp_path / 'out'}\n")
    return path


def test_minimal_defaults():
    cfg = parse_config_text("model = quadratic_test\n")
    assert (cfg.n, cfg.eps0, cfg.ratio, cfg.count) == (33, 2.0 ** -4, 0.5, 8)


def test_rejections():
    with pytest.raises(ValidationError) as err:
        parse_config_text("model = rochet_chone\nq = 0.5\n")
    assert err.value.key == "q"
    with pytest.raises(ParseError) as err:
        parse_config_text("model = rochet_chone\nfoo = 1\n")
    assert err.value.key == "foo" and err.value.line == 2
    with pytest.raises(ValidationError):
        parse_config_text("model = exp\ncount = 0\n")
    with pytest.raises(ParseError):
        parse_config_text("model = exp\nn = lots\n")
    with pytest.raises(ParseError):
        parse_config_text("n = 17\n")
    with pytest.raises(ParseError):
        parse_config_text("model = exp\nmodel = exp\n")
    with pytest.raises(ValidationError):
        parse_config_text("model = exp\naudits = G_identity, nonsense\n")


def test_echo_written(tmp_path):
    cfg = parse_config(write_cfg(tmp_path, "model = exp # comment\n\n"))
    echo = (tmp_path / "out" / "effective_config.txt").read_text()
    assert "model = exp" in echo and "n = 33" in echo
    again = parse_config_text(echo.replace("# effective", "# was"), source_dir=tmp_path)
    assert again == cfg


def test_gamma_table(tmp_path):
    np.savetxt(tmp_path / "gamma.csv", np.ones((3, 3)), delimiter=",")
    cfg = parse_config_text("model = rochet_chone\ngamma_table = gamma.csv\n", source_dir=tmp_path)
    m = cfg.build_model()
    assert np.allclose(m.params["gamma"](np.zeros((2, 2))), 1.0)


def test_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "elsewhere"))
    cfg = parse_config(write_cfg(tmp_path, "model = exp\n"))
    assert cfg.output_dir() == tmp_path / "elsewhere"
    assert (tmp_path / "elsewhere" / "effective_config.txt").exists()


def test_sweep_quadratic(tmp_path, capsys):
    code = cli.main(["sweep", "--config", str(write_cfg(tmp_path, "model = quadratic_test\n" + SMALL))])
    assert code == 0
    out = tmp_path / "out"
    table = R.read_sweep_csv(out / "sweep.csv")
    assert list(table) == list(R.SWEEP_COLUMNS)
    assert table["err_K_vs_baseline"][-1] < table["err_K_vs_baseline"][0]
    for name in ("solution_heatmap.svg", "error_vs_eps.svg", "penalty_decay.svg", "audit.csv", "audit.json"):
        assert (out / name).exists()
    assert "[PASS]" in capsys.readouterr().out


def test_sweep_rochet_chone_heatmap(tmp_path):
    assert cli.main(["sweep", "--config", str(write_cfg(tmp_path, "model = rochet_chone\n" + SMALL))]) == 0
    ET.parse(tmp_path / "out" / "solution_heatmap.svg")


def test_exit_codes(tmp_path):
    assert cli.main(["sweep", "--config", str(write_cfg(tmp_path, "model = exp\ncount = 0\n"))]) == 2
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 2
    solver_fail = write_cfg(tmp_path, "model = rochet_chone\nmax_iters = 1\n" + SMALL)
    assert cli.main(["solve", "--config", str(solver_fail)]) == 3
    audit_fail = write_cfg(tmp_path, "model = quadratic_test\npenalty_slope = 50\n" + SMALL)
    assert cli.main(["sweep", "--config", str(audit_fail)]) == 4
    assert cli.main(["report", "--input", str(tmp_path / "nowhere")]) == 2


def test_solve_baseline_audit_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "model = rochet_chone\n" + SMALL)
    assert cli.main(["solve", "--config", str(cfg), "--eps", "0.01"]) == 0
    assert "eps=0.01 " in capsys.readouterr().out
    assert (tmp_path / "out" / "solution.csv").exists()
    assert cli.main(["baseline", "--config", str(cfg)]) == 0
    assert cli.main(["sweep", "--config", str(cfg)]) == 0
    first = (tmp_path / "out" / "audit.csv").read_bytes()
    assert cli.main(["audit", "--config", str(cfg), "--input", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "audit.csv").read_bytes() == first
    assert cli.main(["report", "--input", str(tmp_path / "out"), "--output", str(tmp_path / "figs")]) == 0
    assert (tmp_path / "figs" / "penalty_decay.svg").exists()


def test_deterministic_outputs(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, "model = quadratic_test\n" + SMALL)
    blobs = []
    for k in range(2):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / f"run{k}"))
        assert cli.main(["sweep", "--config", str(cfg)]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted((tmp_path / f"run{k}").iterdir())})
    assert blobs[0] == blobs[1]


def test_field_round_trip(tmp_path, grid17):
    u = np.random.default_rng(0).standard_normal(grid17.shape)
    R.write_field_csv(tmp_path / "f.csv", grid17, u)
    back = R.read_field_csv(tmp_path / "f.csv", grid17)
    assert np.array_equal(back[grid17.mask_inside], u[grid17.mask_inside])


def test_heatmap_constant_single_colour():
    doc = R.emit_svg(np.full((5, 5), 2.0))
    root = ET.fromstring(doc)
    cells = [e for e in root.iter("{http://www.w3.org/2000/svg}rect") if e.get("width") == e.get("height")
             and float(e.get("width")) > 30]
    assert len(cells) == 25
    assert {c.get("fill") for c in cells} == {R.COLORMAP[0]}


def test_colormap():
    assert len(R.COLORMAP) == 256 and len(set(R.COLORMAP)) > 200
    assert R.color_index([0.0, 0.5, 1.0], 0.0, 1.0).tolist() == [0, 127, 255]


def test_decay_plot_vertices_and_determinism():
    eps = 2.0 ** -np.arange(4, 12)
    series = [("decay", eps, eps ** 1.3)]
    doc = R.emit_svg(series, logx=True, logy=True)
    root = ET.fromstring(doc)
    lines = list(root.iter("{http://www.w3.org/2000/svg}polyline"))
    assert len(lines) == 1 and len(lines[0].get("points").split()) == 8
    assert doc == R.emit_svg(series, logx=True, logy=True)
    xs = [float(p.split(",")[0]) for p in lines[0].get("points").split()]
    # equal spacing on a log axis, up to the 0.01 coordinate rounding
    assert np.allclose(np.diff(xs), np.diff(xs)[0], rtol=0, atol=0.02)
