"""
Seeded synthetic project-and-capture process standing in for a physical
projector-camera rig.

The capture model, per camera pixel (all arithmetic in linear light until
the final encode):

    I_x = encode( clip( S * (E_a + E_p * M * warp(x ** projector_gamma)) ) ) + noise

where S is the surface albedo, E_a the ambient illumination map, E_p the
projector gain map (with radial vignetting), M the binary occlusion mask,
warp(.) bilinear resampling from the projector plane through the
ground-truth grid, encode(.) the camera response (power camera_gamma) and
noise additive Gaussian in the encoded domain. The result is clipped to
[0, 1].

The ground-truth warp maps the projector image slightly beyond the camera
frame, so every camera pixel lies inside the projected footprint and the
occlusion mask alone decides which pixels receive direct light.

Every operation is a pure function of (setup, inputs, seed): noise streams
are derived per purpose and per pattern index, so captures can run in any
order, or in parallel, without changing results.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
import yaml

from .imaging import Image, gray_image, load_png, save_png

GRAY_LEVEL = 128.0 / 255.0  # plain gray projector input x0
NUM_TEXTURE_FAMILIES = 12


# ---------------------------------------------------------------------------
# configuration and setup containers
# ---------------------------------------------------------------------------

@dataclass
class SetupConfig:
    cam_resolution: tuple = (240, 320)   # (H, W)
    prj_resolution: tuple = (256, 256)
    occluder_count: int = 2
    noise_sigma: float = 0.005           # encoded-domain Gaussian std, 0-1 scale
    texture: str = "auto"                # "auto", "family:<k>" or "file:<path>"
    projector_gamma: float = 2.2
    camera_gamma: float = 1.0 / 2.2
    color_mixing: bool = False           # 3x3 channel crosstalk, off by default
    checker_cell: int = 8                # projector pixels per checkerboard cell
    mask_shift_pairs: int = 3            # shifted checkerboard pairs for mask extraction

    def validate(self):
        if min(self.cam_resolution) < 16 or min(self.prj_resolution) < 16:
            raise ValueError("resolutions must be at least 16x16")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.occluder_count < 0:
            raise ValueError("occluder_count must be >= 0")


@dataclass
class SceneSetup:
    """Ground-truth world of one simulated setup (camera plane unless noted)."""

    albedo: np.ndarray           # (Hc, Wc, 3) surface reflectance S
    warp_grid: np.ndarray        # (Hc, Wc, 2) normalized projector coords per camera pixel
    occlusion_mask: np.ndarray   # (Hc, Wc) binary, 1 where projector light reaches the surface
    ambient: np.ndarray          # (Hc, Wc, 3) ambient illumination E_a
    projector_gain: np.ndarray   # (Hc, Wc, 3) projector gain E_p with vignetting
    projector_gamma: float
    camera_gamma: float
    noise_sigma: float
    seed: int
    cam_resolution: tuple
    prj_resolution: tuple
    config: SetupConfig
    color_mix: np.ndarray = field(default=None)  # optional 3x3 crosstalk matrix

    def gray_input(self) -> Image:
        return gray_image(*self.prj_resolution)


@dataclass
class CaptureSet:
    """Scene capture, direct light mask and sampling image pairs of one setup."""

    scene_image: Image
    direct_mask: Image
    train_pairs: list
    test_pairs: list


# ---------------------------------------------------------------------------
# seeded streams
# ---------------------------------------------------------------------------

def _rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([int(seed), zlib.crc32(stream.encode()), int(index)]))
    )


# ---------------------------------------------------------------------------
# procedural textures
# ---------------------------------------------------------------------------

def value_noise(h, w, cells, rng) -> np.ndarray:
    """Bilinearly upsampled random grid in [0, 1]."""
    grid = rng.random((cells, cells)).astype(np.float32)
    t = torch.from_numpy(grid)[None, None]
    up = F.interpolate(t, size=(h, w), mode="bilinear", align_corners=True)
    return up[0, 0].numpy()


def _coords(h, w):
    y, x = np.meshgrid(np.linspace(0, 1, h, dtype=np.float32),
                       np.linspace(0, 1, w, dtype=np.float32), indexing="ij")
    return x, y


def _colorize(pattern, c0, c1):
    p = pattern[..., None].astype(np.float32)
    return np.asarray(c0, np.float32) * (1 - p) + np.asarray(c1, np.float32) * p


_FAMILY_PALETTES = [
    ((0.75, 0.20, 0.15), (0.30, 0.05, 0.05)),   # 0 horizontal stripes, reds
    ((0.15, 0.65, 0.25), (0.05, 0.25, 0.10)),   # 1 vertical stripes, greens
    ((0.15, 0.25, 0.75), (0.85, 0.80, 0.25)),   # 2 checkerboard, blue/yellow
    ((0.55, 0.20, 0.65), (0.90, 0.55, 0.15)),   # 3 blobs, purple/orange
    ((0.20, 0.75, 0.80), (0.80, 0.15, 0.25)),   # 4 dots, cyan/red
    ((0.60, 0.40, 0.20), (0.90, 0.75, 0.50)),   # 5 rings, browns
    ((0.80, 0.25, 0.70), (0.20, 0.65, 0.35)),   # 6 diagonal waves, magenta/green
    ((0.85, 0.65, 0.70), (0.65, 0.75, 0.90)),   # 7 smooth pastel
    ((0.35, 0.45, 0.60), (0.60, 0.70, 0.80)),   # 8 fine grain, blue-gray
    ((0.90, 0.85, 0.70), (0.70, 0.15, 0.15)),   # 9 grid lines, red on cream
    ((0.85, 0.75, 0.15), (0.15, 0.30, 0.70)),   # 10 anti-diagonal stripes, yellow/blue
    ((0.15, 0.55, 0.50), (0.55, 0.35, 0.20)),   # 11 sparse dots, teal/brown
]


def family_texture(family: int, h: int, w: int, rng) -> np.ndarray:
    """One sample of an albedo texture family, values in [0.2, 0.95].

    Families are visually distinct parametric patterns; the classifier
    dataset treats each family as one object class.
    """
    family = int(family) % NUM_TEXTURE_FAMILIES
    x, y = _coords(h, w)
    f = rng.uniform(4.0, 7.0)
    phase = rng.uniform(0, 1)
    wobble = 0.6 * value_noise(h, w, 5, rng)

    if family == 0:
        p = 0.5 + 0.5 * np.sin(2 * np.pi * (f * y + phase) + wobble)
    elif family == 1:
        p = 0.5 + 0.5 * np.sin(2 * np.pi * (f * x + phase) + wobble)
    elif family == 2:
        fc = rng.uniform(3.0, 5.0)
        p = ((np.floor(fc * x + phase) + np.floor(fc * y + phase)) % 2).astype(np.float32)
    elif family == 3:
        p = (value_noise(h, w, 4, rng) > rng.uniform(0.45, 0.55)).astype(np.float32)
    elif family == 4:
        fd = rng.uniform(5.0, 8.0)
        p = (((fd * x + phase) % 1.0 - 0.5) ** 2 + ((fd * y + phase) % 1.0 - 0.5) ** 2 < 0.05).astype(np.float32)
    elif family == 5:
        cx, cy = rng.uniform(0.3, 0.7, 2)
        r = np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
        p = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(5, 8) * r)
    elif family == 6:
        p = 0.5 + 0.5 * np.sin(2 * np.pi * (f * 0.7 * (x + y) + phase) + wobble)
    elif family == 7:
        p = 0.6 * value_noise(h, w, 3, rng) + 0.4 * value_noise(h, w, 6, rng)
    elif family == 8:
        p = value_noise(h, w, 24, rng)
    elif family == 9:
        fg = rng.uniform(4.0, 6.0)
        gx = np.abs((fg * x + phase) % 1.0 - 0.5)
        gy = np.abs((fg * y + phase) % 1.0 - 0.5)
        p = (np.minimum(gx, gy) < 0.08).astype(np.float32)
    elif family == 10:
        p = 0.5 + 0.5 * np.sin(2 * np.pi * (f * 0.7 * (x - y) + phase) + wobble)
    else:
        fd = rng.uniform(2.5, 4.0)
        dots = (((fd * x + phase) % 1.0 - 0.5) ** 2 + ((fd * y + phase) % 1.0 - 0.5) ** 2 < 0.08).astype(np.float32)
        p = 0.55 * dots + 0.45 * (0.5 * (x + y))

    c0, c1 = _FAMILY_PALETTES[family]
    jitter = rng.uniform(-0.06, 0.06, size=(2, 3)).astype(np.float32)
    tex = _colorize(np.clip(p, 0, 1), np.clip(np.asarray(c0) + jitter[0], 0.05, 1.0),
                    np.clip(np.asarray(c1) + jitter[1], 0.05, 1.0))
    return np.clip(0.2 + 0.75 * tex, 0.2, 0.95).astype(np.float32)


def sampling_pattern(h: int, w: int, rng) -> Image:
    """Colorful textured projector sampling image (multi-octave value noise)."""
    chans = []
    for _ in range(3):
        layer = (
            0.55 * value_noise(h, w, 4, rng)
            + 0.30 * value_noise(h, w, 10, rng)
            + 0.15 * value_noise(h, w, 24, rng)
        )
        lo, hi = layer.min(), layer.max()
        chans.append((layer - lo) / max(hi - lo, 1e-6))
    return Image(np.stack(chans, axis=-1).astype(np.float32))


# ---------------------------------------------------------------------------
# setup generation
# ---------------------------------------------------------------------------

def _tps_displacement(h, w, rng, amplitude=0.03, ctrl=4):
    """Smooth thin-plate-spline displacement field over the camera frame."""
    cx, cy = np.meshgrid(np.linspace(-1, 1, ctrl), np.linspace(-1, 1, ctrl))
    centers = np.stack([cx.ravel(), cy.ravel()], axis=1)  # (K, 2)
    disp = rng.uniform(-amplitude, amplitude, size=(ctrl * ctrl, 2))

    def kernel(r2):
        return np.where(r2 > 0, r2 * np.log(r2 + 1e-12), 0.0)

    # fit TPS weights mapping control points to their displacements
    k = centers.shape[0]
    d2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    L = np.zeros((k + 3, k + 3))
    L[:k, :k] = kernel(d2)
    L[:k, k] = 1.0
    L[:k, k + 1 :] = centers
    L[k, :k] = 1.0
    L[k + 1 :, :k] = centers.T
    rhs = np.zeros((k + 3, 2))
    rhs[:k] = disp
    w_aff = np.linalg.solve(L, rhs)

    gx, gy = _coords(h, w)
    pts = np.stack([gx.ravel() * 2 - 1, gy.ravel() * 2 - 1], axis=1)
    r2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    u = kernel(r2)
    out = u @ w_aff[:k] + w_aff[k] + pts @ w_aff[k + 1 :]
    return out.reshape(h, w, 2).astype(np.float32)


def _homography_from_corners(src, dst):
    """3x3 homography mapping 4 src points to 4 dst points (DLT)."""
    a = []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.asarray(a, dtype=np.float64))
    h = vt[-1].reshape(3, 3)
    return h / h[2, 2]


def _build_warp(hc, wc, rng):
    """Camera-plane grid of normalized projector coordinates.

    The projector footprint strictly contains the camera frame: the frame
    corners map to points inset from the projector image border, jittered
    per setup, plus a smooth TPS wiggle.
    """
    inset = rng.uniform(0.04, 0.10)
    jitter = rng.uniform(-0.04, 0.04, size=(4, 2))
    cam_corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    prj_corners = [
        (sx * (1 - inset) + jx, sy * (1 - inset) + jy)
        for (sx, sy), (jx, jy) in zip(cam_corners, jitter)
    ]
    h = _homography_from_corners(cam_corners, prj_corners)

    gx, gy = _coords(hc, wc)
    u = gx * 2 - 1
    v = gy * 2 - 1
    ones = np.ones_like(u)
    p = np.einsum("ij,jhw->ihw", h, np.stack([u, v, ones]))
    grid = np.stack([p[0] / p[2], p[1] / p[2]], axis=-1)

    grid = grid + _tps_displacement(hc, wc, rng, amplitude=0.025)
    # keep the footprint covering the frame: every pullback coordinate stays
    # strictly inside the projector image
    return np.clip(grid, -0.985, 0.985).astype(np.float32)


def _build_occlusion(hc, wc, count, rng):
    mask = np.ones((hc, wc), dtype=np.float32)
    x, y = _coords(hc, wc)
    for _ in range(count):
        cx, cy = rng.uniform(0.15, 0.85, 2)
        rx = rng.uniform(0.06, 0.16)
        ry = rng.uniform(0.06, 0.16)
        ang = rng.uniform(0, np.pi)
        dx, dy = x - cx, y - cy
        xr = dx * np.cos(ang) + dy * np.sin(ang)
        yr = -dx * np.sin(ang) + dy * np.cos(ang)
        if rng.random() < 0.5:
            inside = (xr / rx) ** 2 + (yr / ry) ** 2 < 1.0
        else:
            inside = (np.abs(xr) < rx) & (np.abs(yr) < ry)
        mask[inside] = 0.0
    return mask


def _warp_coverage(grid, bins=16):
    """Fraction of the projector image square reached by the pullback grid."""
    u = (grid[..., 0].ravel() + 1) / 2
    v = (grid[..., 1].ravel() + 1) / 2
    hist, _, _ = np.histogram2d(u, v, bins=bins, range=[[0, 1], [0, 1]])
    return float((hist > 0).mean())


def make_setup(config: SetupConfig, seed: int) -> SceneSetup:
    """Deterministically build a scene from (config, seed)."""
    config.validate()
    hc, wc = config.cam_resolution

    warp = _build_warp(hc, wc, _rng(seed, "warp"))
    coverage = _warp_coverage(warp)
    if coverage < 0.5:
        raise ValueError(f"degenerate setup: projector footprint covers only {coverage:.0%} of its image")

    occl = _build_occlusion(hc, wc, config.occluder_count, _rng(seed, "occluders"))
    if occl.mean() < 0.25:
        raise ValueError(f"degenerate setup: only {occl.mean():.0%} of camera pixels receive projector light")

    tex_rng = _rng(seed, "albedo")
    if config.texture == "auto":
        family = int(tex_rng.integers(0, NUM_TEXTURE_FAMILIES))
        albedo = family_texture(family, hc, wc, tex_rng)
    elif config.texture.startswith("family:"):
        albedo = family_texture(int(config.texture.split(":", 1)[1]), hc, wc, tex_rng)
    elif config.texture.startswith("file:"):
        img = load_png(config.texture.split(":", 1)[1])
        t = torch.from_numpy(img.pixels.transpose(2, 0, 1))[None]
        up = F.interpolate(t, size=(hc, wc), mode="bilinear", align_corners=False)
        albedo = np.clip(0.2 + 0.75 * up[0].numpy().transpose(1, 2, 0), 0.2, 0.95)
    else:
        raise ValueError(f"unknown texture spec {config.texture!r}")

    amb_rng = _rng(seed, "ambient")
    base = amb_rng.uniform(0.10, 0.20, size=3).astype(np.float32)
    variation = 0.04 * (value_noise(hc, wc, 3, amb_rng) - 0.5)
    ambient = np.clip(base[None, None, :] + variation[..., None], 0.03, 0.3).astype(np.float32)

    gain_rng = _rng(seed, "gain")
    gbase = gain_rng.uniform(0.55, 0.75, size=3).astype(np.float32)
    x, y = _coords(hc, wc)
    cx, cy = gain_rng.uniform(0.4, 0.6, 2)
    r2 = ((x - cx) ** 2 + (y - cy) ** 2) / 0.5
    vignette = np.clip(1.0 - 0.30 * r2, 0.55, 1.0).astype(np.float32)
    gain = (gbase[None, None, :] * vignette[..., None]).astype(np.float32)

    mix = None
    if config.color_mixing:
        mrng = _rng(seed, "colormix")
        mix = np.eye(3, dtype=np.float32) + mrng.uniform(-0.05, 0.05, (3, 3)).astype(np.float32)
        mix = mix / mix.sum(axis=1, keepdims=True)

    return SceneSetup(
        albedo=albedo.astype(np.float32),
        warp_grid=warp,
        occlusion_mask=occl,
        ambient=ambient,
        projector_gain=gain,
        projector_gamma=config.projector_gamma,
        camera_gamma=config.camera_gamma,
        noise_sigma=config.noise_sigma,
        seed=int(seed),
        cam_resolution=tuple(config.cam_resolution),
        prj_resolution=tuple(config.prj_resolution),
        config=config,
        color_mix=mix,
    )


# ---------------------------------------------------------------------------
# capture
# ---------------------------------------------------------------------------

def project_and_capture(setup: SceneSetup, x: Image, noise: bool,
                        stream: str = "live", index: int = 0) -> Image:
    """Camera capture of the scene under projection of x.

    Deterministic for noise=False; for noise=True the Gaussian sensor noise
    is drawn from the (setup.seed, stream, index) stream, so repeated calls
    with identical arguments return identical captures.
    """
    if x.resolution != tuple(setup.prj_resolution):
        raise ValueError(f"projector image {x.resolution} does not match {setup.prj_resolution}")

    x_lin = torch.from_numpy(x.pixels.transpose(2, 0, 1)) ** setup.projector_gamma
    grid = torch.from_numpy(setup.warp_grid)[None]
    warped = F.grid_sample(x_lin[None], grid, mode="bilinear",
                           padding_mode="zeros", align_corners=True)[0]
    warped = warped.numpy().transpose(1, 2, 0)

    if setup.color_mix is not None:
        warped = warped @ setup.color_mix.T

    direct = setup.projector_gain * setup.occlusion_mask[..., None] * warped
    linear = np.clip(setup.albedo * (setup.ambient + direct), 0.0, 1.0)
    encoded = linear ** setup.camera_gamma

    if noise and setup.noise_sigma > 0:
        g = _rng(setup.seed, stream, index)
        encoded = encoded + g.normal(0.0, setup.noise_sigma, size=encoded.shape)

    return Image(np.clip(encoded, 0.0, 1.0).astype(np.float32))


def capture_scene(setup: SceneSetup) -> Image:
    """Scene image I_s: capture under plain gray projector illumination."""
    return project_and_capture(setup, setup.gray_input(), noise=True, stream="scene")


def checkerboard(h, w, cell, shift=0.0) -> Image:
    """Binary checkerboard projector pattern; shift is in projector pixels."""
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    par = ((np.floor((i - shift) / cell) + np.floor((j - shift) / cell)) % 2).astype(np.float32)
    return Image(np.repeat(par[..., None], 3, axis=2))


def extract_direct_mask(setup: SceneSetup, threshold: float = 0.05) -> Image:
    """Direct light mask from shifted checkerboard pattern pairs.

    Projects high-frequency checkerboards and their complements at a few
    sub-cell shifts; per pixel the direct component is the largest
    capture difference D = max(I_C, I_{1-C}) - min(I_C, I_{1-C}) over the
    pairs, and the mask is D > threshold on any channel. The shifts cover
    pixels that fall on cell boundaries of any single pattern.
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must lie in (0, 1]")
    hp, wp = setup.prj_resolution
    cell = setup.config.checker_cell
    pairs = max(1, setup.config.mask_shift_pairs)
    direct = np.zeros(tuple(setup.cam_resolution) + (3,), dtype=np.float32)
    for k in range(pairs):
        shift = k * cell / pairs
        pat = checkerboard(hp, wp, cell, shift)
        comp = Image(1.0 - pat.pixels)
        i_c = project_and_capture(setup, pat, noise=True, stream="mask", index=2 * k)
        i_n = project_and_capture(setup, comp, noise=True, stream="mask", index=2 * k + 1)
        d = np.abs(i_c.pixels - i_n.pixels)
        direct = np.maximum(direct, d)
    mask = (direct > threshold).any(axis=2).astype(np.float32)
    return Image(np.repeat(mask[..., None], 3, axis=2))


def capture_training_set(setup: SceneSetup, m: int,
                         pattern_source: str = "procedural_color_texture",
                         num_test: int = 200, image_dir=None,
                         mask_threshold: float = 0.05) -> CaptureSet:
    """M sampling image pairs plus a held-out test set and the scene artifacts."""
    if m < 1:
        raise ValueError("need at least one sampling pair")
    hp, wp = setup.prj_resolution

    def make_pattern(stream, i):
        if pattern_source == "procedural_color_texture":
            return sampling_pattern(hp, wp, _rng(setup.seed, "pat_" + stream, i))
        if pattern_source == "directory_of_images":
            files = sorted(Path(image_dir).glob("*.png")) if image_dir else []
            if not files:
                raise ValueError(f"no PNG images found in {image_dir!r}")
            img = load_png(files[i % len(files)])
            t = torch.from_numpy(img.pixels.transpose(2, 0, 1))[None]
            up = F.interpolate(t, size=(hp, wp), mode="bilinear", align_corners=False)
            return Image(np.clip(up[0].numpy().transpose(1, 2, 0), 0, 1))
        raise ValueError(f"unknown pattern source {pattern_source!r}")

    train, test = [], []
    for i in range(m):
        pat = make_pattern("train", i)
        train.append((pat, project_and_capture(setup, pat, noise=True, stream="train", index=i)))
    for i in range(num_test):
        pat = make_pattern("test", i)
        test.append((pat, project_and_capture(setup, pat, noise=True, stream="test", index=i)))

    return CaptureSet(
        scene_image=capture_scene(setup),
        direct_mask=extract_direct_mask(setup, mask_threshold),
        train_pairs=train,
        test_pairs=test,
    )


def projector_influence(setup: SceneSetup) -> np.ndarray:
    """Projector-plane binary map: 1 where a pixel influences any unoccluded
    camera pixel through the ground-truth warp (bilinear footprint)."""
    hp, wp = setup.prj_resolution
    grid = setup.warp_grid
    vis = setup.occlusion_mask > 0.5
    px = (grid[..., 0][vis] + 1) / 2 * (wp - 1)
    py = (grid[..., 1][vis] + 1) / 2 * (hp - 1)
    out = np.zeros((hp, wp), dtype=np.float32)
    x0 = np.floor(px).astype(int)
    y0 = np.floor(py).astype(int)
    for dx in (0, 1):
        for dy in (0, 1):
            xs = np.clip(x0 + dx, 0, wp - 1)
            ys = np.clip(y0 + dy, 0, hp - 1)
            wgt = np.abs(1 - dx - (px - x0)) * np.abs(1 - dy - (py - y0))
            sel = wgt > 1e-9
            out[ys[sel], xs[sel]] = 1.0
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_ARRAY_FIELDS = ["albedo", "warp_grid", "occlusion_mask", "ambient", "projector_gain"]


def save_setup(setup: SceneSetup, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = asdict(setup.config)
    cfg["cam_resolution"] = list(cfg["cam_resolution"])
    cfg["prj_resolution"] = list(cfg["prj_resolution"])
    cfg["seed"] = setup.seed
    with open(out / "config.yaml", "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True)
    for name in _ARRAY_FIELDS:
        np.save(out / f"{name}.npy", getattr(setup, name))
    if setup.color_mix is not None:
        np.save(out / "color_mix.npy", setup.color_mix)


def load_setup(in_dir) -> SceneSetup:
    src = Path(in_dir)
    with open(src / "config.yaml") as f:
        cfg = yaml.safe_load(f)
    seed = cfg.pop("seed")
    cfg["cam_resolution"] = tuple(cfg["cam_resolution"])
    cfg["prj_resolution"] = tuple(cfg["prj_resolution"])
    config = SetupConfig(**cfg)
    arrays = {name: np.load(src / f"{name}.npy") for name in _ARRAY_FIELDS}
    mix_path = src / "color_mix.npy"
    return SceneSetup(
        **arrays,
        projector_gamma=config.projector_gamma,
        camera_gamma=config.camera_gamma,
        noise_sigma=config.noise_sigma,
        seed=seed,
        cam_resolution=config.cam_resolution,
        prj_resolution=config.prj_resolution,
        config=config,
        color_mix=np.load(mix_path) if mix_path.exists() else None,
    )


def save_capture_set(cs: CaptureSet, out_dir) -> None:
    out = Path(out_dir)
    save_png(cs.scene_image, out / "scene" / "scene.png")
    save_png(cs.direct_mask, out / "scene" / "direct_mask.png")
    for split, pairs in (("train", cs.train_pairs), ("test", cs.test_pairs)):
        for i, (prj, cam) in enumerate(pairs):
            save_png(prj, out / split / "prj" / f"{i:04d}.png")
            save_png(cam, out / split / "cam" / f"{i:04d}.png")


def load_capture_set(in_dir) -> CaptureSet:
    src = Path(in_dir)

    def pairs(split):
        prj_files = sorted((src / split / "prj").glob("*.png"))
        return [(load_png(p), load_png(src / split / "cam" / p.name)) for p in prj_files]

    return CaptureSet(
        scene_image=load_png(src / "scene" / "scene.png"),
        direct_mask=load_png(src / "scene" / "direct_mask.png"),
        train_pairs=pairs("train"),
        test_pairs=pairs("test"),
    )
