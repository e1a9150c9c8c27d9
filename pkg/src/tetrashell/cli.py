"""Command-line driver for the shell / grid / TSDF / PCN / evaluation pipeline.

Exit codes: 0 success, 1 computation failure, 2 usage or input error
(missing file, malformed input).

Global ``--config FILE`` points at a JSON object whose keys are flag
destinations (``tau``, ``res``, ``k``, ``batch`` ...); its values replace the
built-in defaults and explicit flags override both.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import threads

log = logging.getLogger("tetrashell")


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"input file not found: {p}")
    return p


def _read_json(path):
    try:
        with open(_existing(path)) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


# --- handlers --------------------------------------------------------------------

def cmd_shell_build(a):
    from .mesh_io import load_mesh, save_mesh
    from .shell import build_shell

    template = load_mesh(_existing(a.template))
    shell = build_shell(template, a.offset, a.decimate, a.subdiv)
    save_mesh(shell, a.output)
    print(f"shell: {shell.n_vertices} vertices, {shell.n_faces} faces -> {a.output}")


def cmd_grid_tetra(a):
    from .grid import save_grid, tetrahedralize
    from .mesh_io import load_mesh

    shell = load_mesh(_existing(a.shell))
    grid = tetrahedralize(shell, a.res)
    save_grid(grid, a.output)
    print(f"grid: {grid.n_summits} summits, {grid.n_tetrahedra} tetrahedra, "
          f"mean edge {grid.mean_edge_length():.4g} m -> {a.output}")


def cmd_grid_labels(a):
    from .grid import assign_part_labels, load_grid, save_grid

    grid = load_grid(_existing(a.grid))
    template = _load_template(a.template)
    grid = assign_part_labels(grid, template)
    out = a.output or a.grid
    save_grid(grid, out)
    counts = np.bincount(grid.part_labels, minlength=template.n_bones)
    print(f"labels: {int(np.count_nonzero(counts))}/{template.n_bones} bones present -> {out}")


def cmd_grid_hierarchy(a):
    from .grid import build_hierarchy, load_grid, save_hierarchy

    grid = load_grid(_existing(a.grid))
    sizes = list(a.sizes)
    if not sizes or sizes[0] != grid.n_summits:
        sizes = [grid.n_summits] + sizes
    h = build_hierarchy(grid, sizes)
    save_hierarchy(h, a.output)
    print(f"hierarchy: levels {h.sizes} -> {a.output}")


def _load_template(path):
    from .skinning import template_from_dict

    try:
        return template_from_dict(_read_json(path))
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed template ({exc})") from None


def cmd_tsdf_compute(a):
    from .grid import load_grid
    from .mesh_io import load_mesh
    from .tsdf import compute_tsdf, generate_gt_field, save_field

    grid = load_grid(_existing(a.grid))
    scan = load_mesh(_existing(a.scan))
    if a.template:
        field = generate_gt_field(scan, _load_template(a.template), grid, a.tau)
    else:
        field = compute_tsdf(grid, scan, a.tau)
    save_field(field, a.output)
    near = np.count_nonzero(np.abs(field.values) < 1.0)
    print(f"tsdf: {grid.n_summits} summits, {near} inside the truncation band -> {a.output}")


def cmd_mesh_extract(a):
    from .grid import load_grid
    from .marching import extract_isosurface
    from .mesh_io import save_mesh
    from .tsdf import load_field

    grid = load_grid(_existing(a.grid))
    field = load_field(_existing(a.field), grid)
    mesh = extract_isosurface(field, a.iso)
    save_mesh(mesh, a.output)
    print(f"extract: {mesh.n_vertices} vertices, {mesh.n_faces} faces -> {a.output}")


def cmd_mesh_repose(a):
    from .marching import repose
    from .mesh_io import load_mesh, save_mesh
    from .skinning import load_pose

    mesh = load_mesh(_existing(a.mesh))
    template = _load_template(a.template)
    rot, trans = load_pose(_existing(a.pose), template.n_bones)
    posed = repose(mesh, template, rot, trans)
    save_mesh(posed, a.output)
    print(f"repose: {posed.n_vertices} vertices -> {a.output}")


def _load_dataset(data_dir, grid):
    from .tsdf import load_field

    d = Path(data_dir)
    if not d.is_dir():
        raise InputError(f"data directory not found: {d}")
    fields = sorted(d.glob("*.ttsf"))
    if not fields:
        raise InputError(f"{d}: no .ttsf fields")
    latents, targets = [], []
    for f in fields:
        z = f.with_suffix(".npy")
        if not z.is_file():
            raise InputError(f"latent file not found: {z}")
        latents.append(np.load(z).astype(np.float64).reshape(-1))
        targets.append(load_field(f, grid).values)
    return np.stack(latents), np.stack(targets), load_field(fields[0], grid).tau


def cmd_pcn_train(a):
    from .grid import load_grid, load_hierarchy
    from .pcn import NetworkConfig, build_network, save_network, train_toy
    from .pcn.network import mse

    grid = load_grid(_existing(a.grid))
    hierarchy = load_hierarchy(_existing(a.hierarchy), grid)
    doc = _read_json(a.net_config) if a.net_config else {}
    latents, targets, _ = _load_dataset(a.data, grid)
    doc.setdefault("latent_dim", latents.shape[1])
    doc.setdefault("k", a.k)
    doc.setdefault("seed", a.seed)
    cfg = NetworkConfig.from_dict(doc)
    if cfg.latent_dim != latents.shape[1]:
        raise InputError(f"config latent_dim {cfg.latent_dim} does not match data ({latents.shape[1]})")
    net = build_network(grid, hierarchy, cfg)
    log_every = max(1, a.epochs // 10)

    def report(epoch, loss):
        if epoch % log_every == 0 or epoch == a.epochs - 1:
            print(f"epoch {epoch:5d}  loss {loss:.6g}")

    net, history = train_toy(net, latents, targets, a.epochs, a.batch, a.seed, a.lr, callback=report)
    save_network(net, a.output, a.grid, a.hierarchy)
    final = mse(net.forward(latents), targets)
    if a.history:
        with open(a.history, "w") as fh:
            json.dump({"loss": history, "final_mse": final}, fh)
    print(f"train: final MSE {final:.6g} after {len(history)} epochs -> {a.output}")


def cmd_pcn_infer(a):
    from .marching import extract_isosurface
    from .mesh_io import save_mesh
    from .pcn import infer, load_network
    from .tsdf import save_field

    net, grid, _ = load_network(_existing(a.net))
    latent = np.load(_existing(a.latent)).astype(np.float64).reshape(-1)
    field = infer(net, latent, grid, a.tau)
    save_field(field, a.output)
    print(f"infer: {grid.n_summits} values -> {a.output}")
    if a.mesh:
        mesh = extract_isosurface(field)
        save_mesh(mesh, a.mesh)
        print(f"infer: {mesh.n_faces} faces -> {a.mesh}")


def cmd_pcn_params(a):
    from .pcn import count_parameters, format_counts, load_network, pcn_layer_count

    if a.net:
        rows = count_parameters(load_network(_existing(a.net))[0])
    elif a.n_out and a.n_in:
        rows = [pcn_layer_count(a.n_out * a.k, a.n_in, a.n_out, a.c_in, a.c_out, "final")]
    else:
        raise InputError("give --net FILE, or --n-out and --n-in")
    print(format_counts(rows))
    if a.json:
        with open(a.json, "w") as fh:
            json.dump([dict(vars(r), bytes=r.bytes, dense_bytes=r.dense_bytes) for r in rows], fh, indent=2)


def cmd_eval_chamfer(a):
    from .evaluation import chamfer_distance
    from .mesh_io import load_mesh

    d = chamfer_distance(load_mesh(_existing(a.a)), load_mesh(_existing(a.b)), a.samples, a.seed)
    print(f"{d:.2f}")


def cmd_eval_heatmap(a):
    from .evaluation import error_heatmap, save_heatmap
    from .mesh_io import load_mesh

    recon = load_mesh(_existing(a.recon))
    dist = error_heatmap(recon, load_mesh(_existing(a.gt)))
    save_heatmap(recon, dist, a.output, a.dmax)
    print(f"heatmap: mean {dist.mean() * 100:.3f} cm, max {dist.max() * 100:.3f} cm -> {a.output}")


def cmd_eval_memcmp(a):
    from .evaluation import compare_memory
    from .grid import load_grid

    report = compare_memory(load_grid(_existing(a.grid)), a.res)
    print(report.table())
    if a.json:
        Path(a.json).write_text(report.to_json())


def cmd_make_mannequin(a):
    from .mesh_io import save_mesh
    from .primitives import mannequin_template
    from .skinning import save_template

    t = mannequin_template(a.res)
    save_template(t, a.output)
    if a.mesh:
        save_mesh(t.mesh().with_normals(), a.mesh)
    print(f"mannequin: {t.n_vertices} vertices, {t.n_bones} bones -> {a.output}")


def cmd_make_sphere(a):
    from .mesh_io import save_mesh
    from .primitives import sphere_with_edge

    m = sphere_with_edge(a.radius, a.max_edge).with_normals()
    save_mesh(m, a.output)
    print(f"sphere: {m.n_vertices} vertices, {m.n_faces} faces -> {a.output}")


def cmd_make_toy(a):
    from .grid import save_grid, save_hierarchy
    from .mesh_io import save_mesh
    from .toy import make_toy_dataset, toy_mesh
    from .tsdf import TsdfField, save_field

    out = Path(a.output)
    (out / "data").mkdir(parents=True, exist_ok=True)
    ds = make_toy_dataset(a.samples, a.res, a.tau, a.sizes, a.latent_dim, a.seed)
    save_grid(ds.grid, out / "grid.tgrd")
    save_hierarchy(ds.hierarchy, out / "hierarchy.thie")
    for i, (axes, z, values) in enumerate(zip(ds.axes, ds.latents, ds.fields)):
        stem = out / "data" / f"sample_{i:03d}"
        save_field(TsdfField(ds.grid, values, ds.tau), stem.with_suffix(".ttsf"))
        np.save(stem.with_suffix(".npy"), z)
        save_mesh(toy_mesh(axes), stem.with_suffix(".obj"))
    print(f"toy: {len(ds.axes)} samples on {ds.grid.n_summits} summits -> {out}")


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tetrashell", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    p.add_argument("--config", dest="defaults_file", default=None,
                   help="JSON file of default flag values (keys are flag names with '_' for '-')")
    p.add_argument("-v", "--verbose", action="store_true")
    groups = p.add_subparsers(dest="group", required=True)

    def group(name, help):
        g = groups.add_parser(name, help=help)
        return g.add_subparsers(dest="command", required=True)

    def command(sub, name, func, help):
        c = sub.add_parser(name, help=help, description=help)
        c.set_defaults(func=func)
        return c

    s = group("shell", "outer-shell construction")
    c = command(s, "build", cmd_shell_build, "inflate, decimate and subdivide a template mesh (OBJ/PLY)")
    c.add_argument("--template", required=True, help="closed, outward-oriented template mesh")
    c.add_argument("--offset", type=float, default=0.04, help="inflation distance in meters (default 0.04)")
    c.add_argument("--decimate", type=int, default=None, help="target vertex count after inflation")
    c.add_argument("--subdiv", type=int, default=0, help="midpoint subdivision iterations")
    c.add_argument("-o", "--output", required=True, help="output mesh (.obj or .ply)")

    s = group("grid", "tetrahedral grids and summit hierarchies")
    c = command(s, "tetra", cmd_grid_tetra, "fill a shell with a BCC tetrahedral grid, written as TGRD")
    c.add_argument("--shell", required=True, help="closed shell mesh")
    c.add_argument("--res", type=float, default=0.01, help="mean summit spacing in meters (default 0.01)")
    c.add_argument("-o", "--output", required=True, help="output .tgrd")
    c = command(s, "labels", cmd_grid_labels, "label summits with the dominant bone of the nearest template vertex")
    c.add_argument("--grid", required=True, help="input .tgrd")
    c.add_argument("--template", required=True, help="skinned template JSON")
    c.add_argument("-o", "--output", default=None, help="output .tgrd (default: overwrite --grid)")
    c = command(s, "hierarchy", cmd_grid_hierarchy, "farthest-point-sampled summit levels, written as THIE")
    c.add_argument("--grid", required=True, help="input .tgrd")
    c.add_argument("--sizes", type=int, nargs="+", required=True,
                   help="sizes of the coarser levels, strictly decreasing (level 0 is added automatically)")
    c.add_argument("-o", "--output", required=True, help="output .thie")

    s = group("tsdf", "ground-truth fields")
    c = command(s, "compute", cmd_tsdf_compute,
                "truncated signed distance of a scan at every grid summit, written as TTSF; with --template "
                "the scan is first skinned to the star pose")
    c.add_argument("--grid", required=True, help="input .tgrd")
    c.add_argument("--scan", required=True, help="scan mesh (OBJ/PLY)")
    c.add_argument("--template", default=None, help="skinned template JSON (current pose + transforms to star)")
    c.add_argument("--tau", type=float, default=0.03, help="truncation distance in meters (default 0.03)")
    c.add_argument("-o", "--output", required=True, help="output .ttsf")

    s = group("mesh", "surface extraction and re-posing")
    c = command(s, "extract", cmd_mesh_extract, "marching-tetrahedra isosurface of a TTSF field")
    c.add_argument("--grid", required=True, help="input .tgrd")
    c.add_argument("--field", required=True, help="input .ttsf")
    c.add_argument("--iso", type=float, default=0.0, help="iso level (default 0)")
    c.add_argument("-o", "--output", required=True, help="output mesh")
    c = command(s, "repose", cmd_mesh_repose, "skin a star-pose mesh into a new pose")
    c.add_argument("--mesh", required=True, help="star-pose mesh")
    c.add_argument("--template", required=True, help="skinned template JSON")
    c.add_argument("--pose", required=True,
                   help="JSON with per-bone 'rotations' (3x3) and 'translations' mapping star to target pose")
    c.add_argument("-o", "--output", required=True, help="output mesh")

    s = group("pcn", "partially connected decoder")
    c = command(s, "train", cmd_pcn_train,
                "train on DATA/*.ttsf fields with matching *.npy latent vectors; writes TPCN weights")
    c.add_argument("--config", dest="net_config", default=None,
                   help="network JSON: latent_dim, channels, k, part_restricted, seed, zero_last")
    c.add_argument("--data", required=True, help="directory of <name>.ttsf + <name>.npy pairs")
    c.add_argument("--grid", required=True, help="input .tgrd (with part labels)")
    c.add_argument("--hierarchy", required=True, help="input .thie")
    c.add_argument("--epochs", type=int, default=500)
    c.add_argument("--batch", type=int, default=5, help="batch size (default 5)")
    c.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate (default 1e-3)")
    c.add_argument("--k", type=int, default=5, help="neighbors per node when the config omits k (default 5)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--history", default=None, help="write the loss history JSON here")
    c.add_argument("-o", "--output", required=True, help="output .tpcn")
    c = command(s, "infer", cmd_pcn_infer, "decode a latent (.npy) into a TTSF field")
    c.add_argument("--net", required=True, help="input .tpcn")
    c.add_argument("--latent", required=True, help="latent vector .npy")
    c.add_argument("--tau", type=float, default=0.03, help="tau recorded in the output field")
    c.add_argument("--mesh", default=None, help="also extract the zero level set to this mesh")
    c.add_argument("-o", "--output", required=True, help="output .ttsf")
    c = command(s, "params", cmd_pcn_params,
                "parameter and memory counts (4 bytes/parameter) vs fully connected layers")
    c.add_argument("--net", default=None, help="count a trained .tpcn")
    c.add_argument("--n-out", type=int, default=None, help="hypothetical final layer: output nodes")
    c.add_argument("--n-in", type=int, default=None, help="hypothetical final layer: input nodes")
    c.add_argument("--k", type=int, default=5)
    c.add_argument("--c-in", type=int, default=2)
    c.add_argument("--c-out", type=int, default=1)
    c.add_argument("--json", default=None, help="also write the counts as JSON")

    s = group("eval", "metrics")
    c = command(s, "chamfer", cmd_eval_chamfer, "symmetric Chamfer distance in cm")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--samples", type=int, default=100_000, help="surface samples per mesh")
    c.add_argument("--seed", type=int, default=0)
    c = command(s, "heatmap", cmd_eval_heatmap, "per-vertex distance to ground truth as a colored PLY")
    c.add_argument("--recon", required=True)
    c.add_argument("--gt", required=True)
    c.add_argument("--dmax", type=float, default=0.02, help="distance mapped to full red (m)")
    c.add_argument("-o", "--output", required=True, help="output .ply")
    c = command(s, "memcmp", cmd_eval_memcmp, "grid summits vs uniform bounding-box voxels")
    c.add_argument("--grid", required=True)
    c.add_argument("--res", type=float, default=0.01)
    c.add_argument("--json", default=None, help="also write the report as JSON")

    s = group("make", "synthetic fixtures")
    c = command(s, "mannequin", cmd_make_mannequin, "star-pose capsule mannequin as a skinned template JSON")
    c.add_argument("--res", type=float, default=0.015, help="surface extraction spacing (m)")
    c.add_argument("--mesh", default=None, help="also write the surface mesh")
    c.add_argument("-o", "--output", required=True)
    c = command(s, "sphere", cmd_make_sphere, "icosphere with bounded edge length")
    c.add_argument("--radius", type=float, default=0.5)
    c.add_argument("--max-edge", type=float, default=0.005)
    c.add_argument("-o", "--output", required=True)
    c = command(s, "toy", cmd_make_toy, "ellipsoid training set: grid, hierarchy, data/*.ttsf|.npy|.obj")
    c.add_argument("--samples", type=int, default=20)
    c.add_argument("--res", type=float, default=0.02)
    c.add_argument("--tau", type=float, default=0.03)
    c.add_argument("--sizes", type=int, nargs="+", default=[2000, 400, 80])
    c.add_argument("--latent-dim", type=int, default=32)
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("-o", "--output", required=True, help="output directory")
    return p


def _apply_defaults(parser: argparse.ArgumentParser, values: dict) -> None:
    """Push config values into every (sub)parser that has a matching destination."""
    stack = [parser]
    while stack:
        cur = stack.pop()
        dests = {a.dest for a in cur._actions}
        cur.set_defaults(**{k: v for k, v in values.items() if k in dests})
        for action in cur._actions:
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", dest="defaults_file", default=None)
    # only options ahead of the command group are global (``pcn train`` has its own --config)
    groups = {"shell", "grid", "tsdf", "mesh", "pcn", "eval", "make"}
    head = next((i for i, tok in enumerate(argv) if tok in groups), len(argv))
    known, _ = pre.parse_known_args(argv[:head])
    try:
        if known.defaults_file:
            cfg = _read_json(known.defaults_file)
            if not isinstance(cfg, dict):
                raise InputError(f"{known.defaults_file}: expected a JSON object")
            _apply_defaults(parser, cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        threads.set_threads(args.threads)
        args.func(args)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        from .mesh_io import MeshFormatError

        if isinstance(exc, MeshFormatError):
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
