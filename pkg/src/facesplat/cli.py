"""Command-line entry points for the whole asset lifecycle."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _load_config_arg(raw: str | None) -> dict:
    if not raw:
        return {}
    s = raw.strip()
    if s.startswith("{"):
        return json.loads(s)
    return json.loads(Path(s).read_text())


def _parse_background(raw: str):
    parts = [float(x) for x in raw.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("background must be r,g,b")
    return tuple(parts)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None,
                   help="JSON file or inline JSON with config overrides")


def _mask_for(args, mesh):
    from .mesh import rasterize_uv_mask
    from . import images
    if args.mask:
        img = images.read_image(args.mask)
        return np.ascontiguousarray(np.swapaxes(img, 0, 1))[:, :, 0] > 0.5
    return rasterize_uv_mask(mesh, args.mask_resolution)


def cmd_init(args):
    from . import images
    from .asset import save_asset
    from .fit import pixel_aligned_init
    from .mesh import load_mesh

    mesh = load_mesh(args.mesh)
    diffuse = None
    if args.diffuse:
        diffuse = np.ascontiguousarray(np.swapaxes(images.read_image(args.diffuse), 0, 1))
    cfg = _load_config_arg(args.config)
    asset = pixel_aligned_init(mesh, _mask_for(args, mesh), args.density, args.seed,
                               diffuse=diffuse,
                               sh_degree=int(cfg.get("sh_degree", args.sh_degree)),
                               epsilon=float(cfg.get("epsilon", 1e-4)))
    save_asset(asset, args.out)
    print(f"initialized {asset.num_points} points -> {args.out}")
    return 0


def cmd_bake(args):
    from . import images
    from .lighting import ENV_SH_ORDER, bake_shadow_map, decompose_envmap
    from .mesh import load_mesh

    env = images.read_image(args.envmap)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    coeffs = decompose_envmap(env, ENV_SH_ORDER)
    (out_dir / "env_sh.json").write_text(json.dumps(coeffs.tolist()))
    mesh = load_mesh(args.mesh)
    shadow = bake_shadow_map(mesh, env, args.resolution, k_dirs=args.k_dirs,
                             seed=args.seed)
    images.write_png(out_dir / "shadow.png", np.swapaxes(shadow, 0, 1), bits=16)
    print(f"baked SH ({coeffs.shape[1]} coeffs/channel) and "
          f"{args.resolution}x{args.resolution} shadow map -> {out_dir}")
    return 0


def cmd_datagen(args):
    from .scene import Scene, build_synthetic_scene, datagen

    if args.make_synthetic:
        scene_dir = Path(args.scene).parent if args.scene else Path(args.out_dir) / "scene"
        overrides = _load_config_arg(args.config)
        build_synthetic_scene(scene_dir, args.make_synthetic, seed=args.seed,
                              **{k: v for k, v in overrides.items()
                                 if k in ("segments", "rings", "blendshapes",
                                          "texture_res", "cameras", "image_size",
                                          "orbit_radius", "fov")})
        scene_file = scene_dir / "scene.json"
        print(f"synthetic scene -> {scene_file}")
    else:
        scene_file = Path(args.scene)
    scene = Scene.load(scene_file)
    manifest = datagen(scene, args.out_dir, image_format=args.format)
    print(f"rendered {len(scene.manifest['views'])} views -> {manifest}")
    return 0


def cmd_optimize(args):
    from .asset import load_asset, save_asset
    from .fit import FitConfig, optimize, save_history_csv
    from .mesh import load_mesh
    from .scene import load_train_views

    mesh = load_mesh(args.mesh)
    asset = load_asset(args.asset)
    train, _, background = load_train_views(args.manifest)
    cfg = FitConfig.from_dict(_load_config_arg(args.config))
    if args.iterations is not None:
        cfg.iterations = args.iterations
    cfg.rng_seed = args.seed

    def sink(it, snapshot, record):
        print(f"  iter {it}: total {record['total']:.5f}")

    out, history = optimize(asset, mesh, train, cfg, background=background,
                            progress_sink=sink if args.verbose else None)
    save_asset(out, args.out)
    if args.loss_csv:
        save_history_csv(history, args.loss_csv)
    print(f"optimized {cfg.iterations} iterations -> {args.out}")
    return 0


def cmd_prune(args):
    from .asset import load_asset, save_asset
    from .fit import deferred_prune

    asset = load_asset(args.asset)
    pruned = deferred_prune(asset, args.threshold)
    save_asset(pruned, args.out)
    print(f"pruned {asset.num_points} -> {pruned.num_points} points "
          f"(sigma <= {args.threshold})")
    return 0


def cmd_curve(args):
    from .asset import load_asset
    from .fit import prune_curve
    from .mesh import load_mesh
    from .scene import load_train_views

    asset = load_asset(args.asset)
    mesh = load_mesh(args.mesh)
    views, _, background = load_train_views(args.manifest)
    thresholds = [float(t) for t in args.thresholds.split(",")]
    report = prune_curve(asset, mesh, views, thresholds, background=background)
    report.to_csv(args.out)
    print(f"curve over {len(thresholds)} thresholds -> {args.out}")
    return 0


def _state_from_args(args, mesh):
    from .camera import Camera
    from .mesh import ExpressionWeights

    camera = Camera.load(args.camera)
    if args.weights:
        frames = json.loads(Path(args.weights).read_text())
        weights = ExpressionWeights(np.asarray(frames[args.frame], dtype=np.float32))
    else:
        weights = ExpressionWeights(np.zeros(mesh.num_blendshapes, dtype=np.float32))
    return camera, weights


def cmd_render(args):
    from . import images
    from .asset import load_asset
    from .mesh import load_mesh
    from .renderer import RenderConfig, render_asset

    mesh = load_mesh(args.mesh)
    asset = load_asset(args.asset)
    camera, weights = _state_from_args(args, mesh)
    cfg = RenderConfig.from_dict(_load_config_arg(args.config))
    out = render_asset(asset, mesh, weights, camera, background=args.background,
                       config=cfg, prune_sigma=args.prune_sigma)
    images.save_render(args.out, out.image)
    print(f"rendered {camera.width}x{camera.height} -> {args.out}")
    return 0


def cmd_animate(args):
    from . import images
    from .asset import load_asset
    from .camera import Camera
    from .mesh import ExpressionWeights, load_mesh
    from .renderer import RenderConfig, render_asset

    mesh = load_mesh(args.mesh)
    asset = load_asset(args.asset)
    camera = Camera.load(args.camera)
    frames = json.loads(Path(args.weights).read_text())
    cfg = RenderConfig.from_dict(_load_config_arg(args.config))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        weights = ExpressionWeights(np.asarray(frame, dtype=np.float32))
        out = render_asset(asset, mesh, weights, camera, background=args.background,
                           config=cfg, prune_sigma=args.prune_sigma)
        images.save_render(out_dir / (args.pattern % i), out.image)
    print(f"animated {len(frames)} frames -> {out_dir}")
    return 0


def cmd_train_translator(args):
    from .translator import TranslatorConfig, save_model, train_translator
    from .translator.data import load_dataset_from_manifest

    overrides = _load_config_arg(args.config)
    doc = json.loads(Path(args.dataset).read_text())
    meta = doc.get("translator", {})
    meta.update(overrides)
    cfg = TranslatorConfig.for_asset(
        sh_degree=int(meta.get("sh_degree", 3)),
        num_blendshapes=int(meta.get("num_blendshapes", 3)),
        **{k: v for k, v in meta.items()
           if k in ("latent_dim", "layers", "heads", "pe_dims", "image_resolution",
                    "max_points_per_patch", "geometry_dim", "diffusion_steps",
                    "schedule", "patch_grid", "pas_density", "pas_seed", "epsilon",
                    "finetune_render_size")})
    dataset = load_dataset_from_manifest(args.dataset, cfg)
    model, schedule, history = train_translator(
        dataset, main_steps=args.main_steps, finetune_steps=args.finetune_steps,
        batch_size=args.batch_size, lr=args.lr, lam=args.image_loss_weight,
        seed=args.seed, progress_sink=lambda h: print(
            f"  step {h['step']} [{h['stage']}]: {h['loss']:.5f}"))
    save_model(args.out, model, dataset.stats, dataset.basis, schedule)
    print(f"trained {len(history)} steps -> {args.out}")
    return 0


def cmd_translate(args):
    from . import images
    from .asset import save_asset
    from .lighting import ENV_SH_ORDER, Lighting, bake_shadow_map, decompose_envmap
    from .mesh import load_mesh
    from .textures import PBRTextureSet
    from .translator import load_model, sample_asset

    model, schedule, stats, basis = load_model(args.model)
    mesh = load_mesh(args.mesh)
    textures = PBRTextureSet.load(args.diffuse, args.normal, args.specular, args.mask)
    env = images.read_image(args.envmap)
    lighting = Lighting(env, decompose_envmap(env, ENV_SH_ORDER),
                        bake_shadow_map(mesh, env, args.shadow_resolution))
    patch_ids = None
    if args.patches:
        patch_ids = [int(x) for x in args.patches.split(",")]
    base = None
    if args.base_asset:
        from .asset import load_asset
        base = load_asset(args.base_asset)
    asset = sample_asset(model, schedule, stats, basis, mesh, textures, lighting,
                         inference_steps=args.steps, seed=args.seed,
                         patch_ids=patch_ids, base_asset=base)
    save_asset(asset, args.out)
    print(f"translated -> {args.out} ({asset.num_points} points, "
          f"{args.steps} steps)")
    return 0


def cmd_serve(args):
    import uvicorn

    from .renderer import RenderConfig
    from .service import create_app

    cfg = RenderConfig.from_dict(_load_config_arg(args.config))
    app = create_app(args.assets, render_config=cfg, ui_dir=args.ui)
    uvicorn.run(app, host=args.bind, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facesplat",
        description="Mesh-rigged Gaussian splats: fit, prune, render, translate, serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="grid-sample a fresh splat asset on a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--diffuse")
    p.add_argument("--mask")
    p.add_argument("--mask-resolution", type=int, default=256)
    p.add_argument("--density", type=float, default=16.0)
    p.add_argument("--sh-degree", type=int, default=3)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("bake", help="environment SH coefficients and UV shadow map")
    p.add_argument("--mesh", required=True)
    p.add_argument("--envmap", required=True)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--k-dirs", type=int, default=32)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_bake)

    p = sub.add_parser("datagen", help="render training targets from a scene manifest")
    p.add_argument("--scene")
    p.add_argument("--make-synthetic", choices=("checker", "stripes"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("exr", "png"), default="exr")
    _add_common(p)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("optimize", help="fit an asset to training views")
    p.add_argument("--asset", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-csv")
    p.add_argument("--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("prune", help="drop points at or below an opacity threshold")
    p.add_argument("--asset", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("curve", help="PSNR vs point count over prune thresholds")
    p.add_argument("--asset", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--thresholds", required=True, help="comma-separated sigmas")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("render", help="render one frame of an asset")
    p.add_argument("--asset", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--weights")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--background", type=_parse_background, default=(0.0, 0.0, 0.0))
    p.add_argument("--prune-sigma", type=float)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("animate", help="render an image sequence from weights JSON")
    p.add_argument("--asset", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--pattern", default="frame_%04d.png")
    p.add_argument("--background", type=_parse_background, default=(0.0, 0.0, 0.0))
    p.add_argument("--prune-sigma", type=float)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_animate)

    p = sub.add_parser("train-translator", help="train the patch diffusion translator")
    p.add_argument("--dataset", required=True)
    p.add_argument("--main-steps", type=int, default=3000)
    p.add_argument("--finetune-steps", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--image-loss-weight", type=float, default=0.1)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train_translator)

    p = sub.add_parser("translate", help="generate a splat asset from PBR inputs")
    p.add_argument("--model", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--diffuse", required=True)
    p.add_argument("--normal", required=True)
    p.add_argument("--specular", required=True)
    p.add_argument("--mask")
    p.add_argument("--envmap", required=True)
    p.add_argument("--shadow-resolution", type=int, default=48)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--patches", help="comma-separated patch ids to regenerate")
    p.add_argument("--base-asset", help="asset providing values for other patches")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("serve", help="local HTTP/WebSocket render service")
    p.add_argument("--assets", required=True, help="directory of .gfa/.obj pairs")
    p.add_argument("--port", type=int, default=8177)
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--ui", help="directory with the built browser viewer")
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # runtime failures exit 1 with a short message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
