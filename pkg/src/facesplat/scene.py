"""Scene directories and training manifests.

A scene directory bundles one head: mesh (OBJ + .bsd), texture PNGs, an HDR
environment map, an expression animation (JSON array of length-B frames),
camera JSONs and a `scene.json` tying them together. `datagen` renders the
scene's views into training targets plus a manifest of
{cameraFile, weightsIndex, imagePath} records.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import images
from .camera import Camera, orbit
from .lighting import ENV_SH_ORDER, Lighting, bake_shadow_map, decompose_envmap
from .mesh import ExpressionWeights, FaceMesh, load_mesh, save_mesh
from .fit import TrainView
from .shader import reference_render
from .synthetic import (checker_textures, gradient_envmap, sphere_head,
                        stripe_textures)
from .textures import PBRTextureSet

VARIANTS = ("checker", "stripes")


def default_expressions(b: int) -> list[list[float]]:
    frames = [[0.0] * b]
    for i in range(b):
        one = [0.0] * b
        one[i] = 1.0
        frames.append(one)
    if b >= 2:
        frames.append([0.5] * b)
    return frames


def build_synthetic_scene(directory, variant: str = "checker", *, segments: int = 32,
                          rings: int = 16, blendshapes: int = 3, texture_res: int = 256,
                          env_size: tuple[int, int] = (64, 32), cameras: int = 24,
                          image_size: int = 128, fov: float = 33.0,
                          orbit_radius: float = 3.4, axes=(1.0, 1.0, 1.0),
                          env_peak_dir=(0.5, 0.3, 0.8), env_peak: float = 2.2,
                          shadow_resolution: int = 48, seed: int = 0,
                          expressions_per_camera: int = 1, squares: int = 4,
                          specular_level: float = 0.3, bump_amplitude: float = 0.12,
                          background=(0.0, 0.0, 0.0), shader_shininess: float = 32.0,
                          shader_specular_strength: float = 0.5) -> dict:
    """Write a complete synthetic scene directory; returns the manifest dict."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; pick one of {VARIANTS}")
    mesh = sphere_head(segments=segments, rings=rings, num_blendshapes=blendshapes,
                       axes=axes, bump_amplitude=bump_amplitude)
    if variant == "checker":
        textures = checker_textures(mesh, resolution=texture_res, squares=squares,
                                    specular_level=specular_level)
    else:
        textures = stripe_textures(mesh, resolution=texture_res,
                                   specular_level=specular_level)
    env = gradient_envmap(env_size[0], env_size[1], peak_dir=env_peak_dir,
                          peak=env_peak)

    save_mesh(mesh, directory / "head.obj")
    tex_paths = textures.save(directory)
    images.write_hdr(directory / "env.hdr", env)
    frames = default_expressions(blendshapes)
    (directory / "expressions.json").write_text(json.dumps(frames))

    cam_dir = directory / "cameras"
    cam_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    cam_files = []
    for i in range(cameras):
        az = 360.0 * i / cameras + float(rng.uniform(-4, 4))
        el = float(rng.uniform(-25, 32))
        cam = orbit([0, 0, 0], orbit_radius, az, el, fov=fov,
                    width=image_size, height=image_size)
        p = cam_dir / f"cam_{i:03d}.json"
        cam.save(p)
        cam_files.append(str(p.relative_to(directory)))

    if expressions_per_camera <= 1:
        views = [{"camera": c, "weightsIndex": i % len(frames)}
                 for i, c in enumerate(cam_files)]
    else:
        k = min(expressions_per_camera, len(frames))
        views = [{"camera": c, "weightsIndex": j}
                 for c in cam_files for j in range(k)]
    manifest = {
        "mesh": "head.obj",
        "diffuse": str(Path(tex_paths["diffuse"]).relative_to(directory)),
        "normal": str(Path(tex_paths["normal"]).relative_to(directory)),
        "specular": str(Path(tex_paths["specular"]).relative_to(directory)),
        "mask": str(Path(tex_paths["mask"]).relative_to(directory)),
        "envmap": "env.hdr",
        "weightsFile": "expressions.json",
        "views": views,
        "background": list(background),
        "shadowResolution": shadow_resolution,
        "shaderShininess": shader_shininess,
        "shaderSpecularStrength": shader_specular_strength,
    }
    (directory / "scene.json").write_text(json.dumps(manifest, indent=2))
    return manifest


class Scene:
    """Loaded scene directory contents."""

    def __init__(self, root: Path, manifest: dict):
        self.root = Path(root)
        self.manifest = manifest
        self.mesh: FaceMesh = load_mesh(self.root / manifest["mesh"])
        self.textures = PBRTextureSet.load(
            self.root / manifest["diffuse"], self.root / manifest["normal"],
            self.root / manifest["specular"],
            self.root / manifest["mask"] if manifest.get("mask") else None)
        env = images.read_image(self.root / manifest["envmap"])
        shadow_res = int(manifest.get("shadowResolution", 48))
        self.lighting = Lighting(
            env, decompose_envmap(env, ENV_SH_ORDER),
            bake_shadow_map(self.mesh, env, shadow_res))
        self.frames = json.loads((self.root / manifest["weightsFile"]).read_text())
        self.background = tuple(manifest.get("background", (0.0, 0.0, 0.0)))
        self.shader_shininess = float(manifest.get("shaderShininess", 32.0))
        self.shader_specular_strength = float(manifest.get("shaderSpecularStrength", 0.5))

    @classmethod
    def load(cls, scene_file) -> "Scene":
        scene_file = Path(scene_file)
        return cls(scene_file.parent, json.loads(scene_file.read_text()))

    def weights(self, index: int) -> ExpressionWeights:
        return ExpressionWeights(np.asarray(self.frames[index], dtype=np.float32))

    def view_list(self):
        out = []
        for v in self.manifest["views"]:
            out.append((Camera.load(self.root / v["camera"]), int(v["weightsIndex"]),
                        v["camera"]))
        return out


def datagen(scene: Scene, out_dir, image_format: str = "exr") -> Path:
    """Render every scene view with the reference shader; write linear targets
    and the training manifest. Returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, (camera, widx, cam_file) in enumerate(scene.view_list()):
        img = reference_render(scene.mesh, scene.textures, scene.lighting,
                               scene.weights(widx), camera,
                               background=scene.background, encode=False,
                               shininess=scene.shader_shininess,
                               specular_strength=scene.shader_specular_strength)
        name = f"view_{i:03d}.{image_format}"
        if image_format == "png":
            images.save_render(out_dir / name, img)
        else:
            images.write_exr(out_dir / name, img)
        records.append({"cameraFile": str((scene.root / cam_file).resolve()),
                        "weightsIndex": widx, "imagePath": name})
    manifest = {
        "views": records,
        "weightsFile": str((scene.root / scene.manifest["weightsFile"]).resolve()),
        "background": list(scene.background),
    }
    path = out_dir / "train_manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_train_views(manifest_path, holdout_every: int = 0):
    """Read a training manifest into TrainViews. With holdout_every > 0, every
    n-th view goes to the second (held-out) list."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    frames = json.loads(Path(doc["weightsFile"]).read_text())
    train, held = [], []
    for i, rec in enumerate(doc["views"]):
        camera = Camera.load(rec["cameraFile"])
        weights = ExpressionWeights(np.asarray(frames[rec["weightsIndex"]],
                                               dtype=np.float32))
        img_path = manifest_path.parent / rec["imagePath"]
        img = images.read_image(img_path)
        if str(img_path).endswith(".png"):
            img = images.gamma_decode(img)
        view = TrainView(camera, weights, np.ascontiguousarray(img, dtype=np.float32))
        if holdout_every and i % holdout_every == holdout_every - 1:
            held.append(view)
        else:
            train.append(view)
    background = tuple(doc.get("background", (0.0, 0.0, 0.0)))
    return train, held, background
