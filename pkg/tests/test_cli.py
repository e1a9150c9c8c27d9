import json

import numpy as np
import pytest

from tetrashell.cli import build_parser, main
from tetrashell.mesh_io import load_mesh, save_mesh
from tetrashell.primitives import icosphere
from tetrashell.skinning import SkinnedTemplate, rotation_about_point, save_pose, save_template


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def sphere_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("sphere")
    assert run("make", "sphere", "--radius", 0.3, "--max-edge", 0.01, "-o", d / "sphere.obj") == 0
    assert run("shell", "build", "--template", d / "sphere.obj", "--offset", 0.04, "-o", d / "shell.obj") == 0
    assert run("grid", "tetra", "--shell", d / "shell.obj", "--res", 0.02, "-o", d / "grid.tgrd") == 0
    assert run("tsdf", "compute", "--grid", d / "grid.tgrd", "--scan", d / "sphere.obj", "-o", d / "f.ttsf") == 0
    assert run("mesh", "extract", "--grid", d / "grid.tgrd", "--field", d / "f.ttsf", "-o", d / "recon.obj") == 0
    return d


def test_sphere_pipeline_chamfer(sphere_run, capsys):
    capsys.readouterr()
    assert run("eval", "chamfer", sphere_run / "recon.obj", sphere_run / "sphere.obj", "--samples", 20000) == 0
    assert float(capsys.readouterr().out.strip()) <= 0.5


def test_chamfer_of_identical_file_prints_zero(sphere_run, capsys):
    capsys.readouterr()
    assert run("eval", "chamfer", sphere_run / "sphere.obj", sphere_run / "sphere.obj", "--samples", 2000) == 0
    assert capsys.readouterr().out.strip() == "0.00"


def test_missing_input_exits_2_with_path(tmp_path, capsys):
    missing = tmp_path / "nope.obj"
    assert run("eval", "chamfer", missing, missing) == 2
    assert str(missing) in capsys.readouterr().err


def test_malformed_mesh_exits_2(tmp_path):
    (tmp_path / "bad.obj").write_text("v 0 0 0\nf 1 2 3\n")
    assert run("shell", "build", "--template", tmp_path / "bad.obj", "-o", tmp_path / "s.obj") == 2


def test_computation_failure_exits_1(sphere_run, tmp_path):
    assert run("grid", "tetra", "--shell", sphere_run / "shell.obj", "--res", -1, "-o", tmp_path / "g.tgrd") == 1


def test_outputs_are_bitwise_reproducible(sphere_run, tmp_path):
    assert run("tsdf", "compute", "--grid", sphere_run / "grid.tgrd", "--scan", sphere_run / "sphere.obj",
               "-o", tmp_path / "f.ttsf") == 0
    assert (tmp_path / "f.ttsf").read_bytes() == (sphere_run / "f.ttsf").read_bytes()
    assert run("mesh", "extract", "--grid", sphere_run / "grid.tgrd", "--field", tmp_path / "f.ttsf",
               "-o", tmp_path / "r.obj") == 0
    assert (tmp_path / "r.obj").read_bytes() == (sphere_run / "recon.obj").read_bytes()


def test_thread_count_does_not_change_outputs(sphere_run, tmp_path):
    for n in (1, 4):
        assert run("--threads", n, "tsdf", "compute", "--grid", sphere_run / "grid.tgrd",
                   "--scan", sphere_run / "sphere.obj", "-o", tmp_path / f"f{n}.ttsf") == 0
    assert (tmp_path / "f1.ttsf").read_bytes() == (tmp_path / "f4.ttsf").read_bytes()


def test_config_file_supplies_defaults(sphere_run, tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"tau": 0.06}))
    assert run("--config", tmp_path / "cfg.json", "tsdf", "compute", "--grid", sphere_run / "grid.tgrd",
               "--scan", sphere_run / "sphere.obj", "-o", tmp_path / "wide.ttsf") == 0
    assert run("--config", tmp_path / "cfg.json", "tsdf", "compute", "--grid", sphere_run / "grid.tgrd",
               "--scan", sphere_run / "sphere.obj", "--tau", 0.03, "-o", tmp_path / "narrow.ttsf") == 0
    assert (tmp_path / "narrow.ttsf").read_bytes() == (sphere_run / "f.ttsf").read_bytes()
    assert (tmp_path / "wide.ttsf").read_bytes() != (sphere_run / "f.ttsf").read_bytes()


def test_bad_config_file_exits_2(tmp_path):
    (tmp_path / "cfg.json").write_text("[1, 2]")
    assert run("--config", tmp_path / "cfg.json", "eval", "chamfer", "a", "b") == 2
    assert run("--config", tmp_path / "missing.json", "eval", "chamfer", "a", "b") == 2


def test_memcmp_and_heatmap(sphere_run, tmp_path, capsys):
    assert run("eval", "memcmp", "--grid", sphere_run / "grid.tgrd", "--res", 0.02, "--json", tmp_path / "m.json") == 0
    assert json.loads((tmp_path / "m.json").read_text())["ratio"] > 1
    assert run("eval", "heatmap", "--recon", sphere_run / "recon.obj", "--gt", sphere_run / "sphere.obj",
               "-o", tmp_path / "h.ply") == 0
    assert load_mesh(tmp_path / "h.ply").n_vertices == load_mesh(sphere_run / "recon.obj").n_vertices


def test_repose_and_labels(tmp_path):
    s = icosphere(2, 0.3)
    w = np.zeros((s.n_vertices, 2))
    w[s.vertices[:, 0] > 0, 1] = 1
    w[s.vertices[:, 0] <= 0, 0] = 1
    save_template(SkinnedTemplate(s.vertices, w, [[0, 0, 0], [0.1, 0, 0]], [-1, 0], faces=s.faces),
                  tmp_path / "t.json")
    save_mesh(s, tmp_path / "s.obj")
    r, t = rotation_about_point([0, 0, 1], 0.5, [0, 0, 0])
    save_pose(tmp_path / "p.json", np.stack([np.eye(3), r]), np.stack([np.zeros(3), t]))
    assert run("mesh", "repose", "--mesh", tmp_path / "s.obj", "--template", tmp_path / "t.json",
               "--pose", tmp_path / "p.json", "-o", tmp_path / "posed.obj") == 0
    posed = load_mesh(tmp_path / "posed.obj")
    right = s.vertices[:, 0] > 0
    np.testing.assert_allclose(posed.vertices[right], s.vertices[right] @ r.T + t, atol=1e-8)
    save_mesh(icosphere(2, 0.36), tmp_path / "shell.obj")
    assert run("grid", "tetra", "--shell", tmp_path / "shell.obj", "--res", 0.05, "-o", tmp_path / "g.tgrd") == 0
    assert run("grid", "labels", "--grid", tmp_path / "g.tgrd", "--template", tmp_path / "t.json") == 0
    assert run("grid", "hierarchy", "--grid", tmp_path / "g.tgrd", "--sizes", 40, 10, "-o", tmp_path / "h.thie") == 0


def test_toy_train_infer_params(tmp_path, capsys):
    d = tmp_path / "toy"
    assert run("make", "toy", "--samples", 5, "--res", 0.05, "--sizes", 60, 15, "-o", d) == 0
    (tmp_path / "net.json").write_text(json.dumps({"latent_dim": 32, "channels": [4, 2, 1], "zero_last": True}))
    args = ["pcn", "train", "--config", tmp_path / "net.json", "--data", d / "data", "--grid", d / "grid.tgrd",
            "--hierarchy", d / "hierarchy.thie", "--epochs", 5, "--history", tmp_path / "hist.json"]
    assert run(*args, "-o", tmp_path / "a.tpcn") == 0
    assert run(*args, "-o", tmp_path / "b.tpcn") == 0
    assert (tmp_path / "a.tpcn").read_bytes() == (tmp_path / "b.tpcn").read_bytes()
    assert len(json.loads((tmp_path / "hist.json").read_text())["loss"]) == 5
    assert run("pcn", "infer", "--net", tmp_path / "a.tpcn", "--latent", d / "data" / "sample_000.npy",
               "--mesh", tmp_path / "z.obj", "-o", tmp_path / "z.ttsf") == 0
    capsys.readouterr()
    assert run("pcn", "params", "--net", tmp_path / "a.tpcn") == 0
    assert "bridge" in capsys.readouterr().out
    assert run("pcn", "params", "--n-out", 260000, "--n-in", 86000, "--json", tmp_path / "c.json") == 0
    assert json.loads((tmp_path / "c.json").read_text())[0]["params"] == 260000 * 5 * 2
    assert run("pcn", "params") == 2


SUBCOMMANDS = [("shell", "build"), ("grid", "tetra"), ("grid", "labels"), ("grid", "hierarchy"),
               ("tsdf", "compute"), ("mesh", "extract"), ("mesh", "repose"), ("pcn", "train"), ("pcn", "infer"),
               ("pcn", "params"), ("eval", "chamfer"), ("eval", "heatmap"), ("eval", "memcmp"),
               ("make", "mannequin"), ("make", "sphere"), ("make", "toy")]


@pytest.mark.parametrize("group,name", SUBCOMMANDS)
def test_every_subcommand_has_help(group, name, capsys):
    with pytest.raises(SystemExit) as exc:
        main([group, name, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    parser = build_parser()
    assert "usage:" in out and name in out
    assert parser.prog == "tetrashell"
