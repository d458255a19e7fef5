"""
Learned differentiable surrogate of the project-and-capture process.

Two stages:

  * WarpingNet (geometry): a learnable affine matrix, thin-plate-spline
    control displacements and a small grid refinement network compose a
    coarse-to-fine sampling grid that warps the projector image into the
    camera frame. All three parameter groups initialize to the exact
    identity mapping.
  * ShadingNet (photometry): a two-branch encoder-decoder. The backbone
    branch consumes the masked warped projector image, the middle branch
    the scene image concatenated with the rough shading product
    warped * mask * scene, with skip connections between the branches at
    every level; the scene image additionally reaches the output layer
    through three full-resolution convolutions.

The same pair of stages, with input and output swapped and without the
mask / rough-shading product, forms the inverse compensation model that
maps a desired camera image back to a projector input.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .imaging import Image, from_tensor, to_tensor, ssim_t
from .procam import CaptureSet

CHECKPOINT_VERSION = 1


def softclamp01(x: torch.Tensor, sharpness: float = 50.0) -> torch.Tensor:
    """Smooth map of the reals into (0,1), identity away from the borders.

    Used as the output nonlinearity during training and attack optimization
    so saturated pixels keep a nonzero gradient; inference hard-clamps.
    """
    k = sharpness
    return x - F.softplus(k * (x - 1.0)) / k + F.softplus(-k * x) / k


def base_grid(h: int, w: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """Identity sampling grid, normalized [-1,1] xy convention, shape (h,w,2)."""
    ys = torch.linspace(-1.0, 1.0, h, dtype=dtype, device=device)
    xs = torch.linspace(-1.0, 1.0, w, dtype=dtype, device=device)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx, gy], dim=-1)


def bilinear_sample(src: torch.Tensor, grid: torch.Tensor) -> torch.Tensor:
    """Bilinear interpolation of src at normalized grid coordinates.

    src:  (C,H,W) or (B,C,H,W); grid: (Ho,Wo,2) or (B,Ho,Wo,2) with x,y in
    [-1,1] (align-corners convention: -1 is pixel 0, +1 is the last pixel).
    Out-of-range coordinates sample zeros. Differentiable in src and grid.

    Coordinate arithmetic runs in float64 so that grids landing on exact
    pixel centers (identity, integer shifts) reproduce the source exactly.
    """
    squeeze = src.dim() == 3
    if squeeze:
        src = src.unsqueeze(0)
    if grid.dim() == 3:
        grid = grid.unsqueeze(0).expand(src.shape[0], -1, -1, -1)
    b, c, h, w = src.shape
    ho, wo = grid.shape[1], grid.shape[2]

    gx = (grid[..., 0].double() + 1.0) * 0.5 * (w - 1)
    gy = (grid[..., 1].double() + 1.0) * 0.5 * (h - 1)

    def snap(g):
        # straight-through snap: grids meant to land on pixel centers
        # (identity, integer shifts) reproduce sources exactly despite
        # float32 grid storage; gradients pass through unchanged
        gd = g.detach()
        rounded = torch.round(gd)
        snapped = torch.where((gd - rounded).abs() < 2e-5, rounded, gd)
        return g + (snapped - gd)

    gx = snap(gx)
    gy = snap(gy)
    x0 = torch.floor(gx.detach())
    y0 = torch.floor(gy.detach())
    fx = gx - x0
    fy = gy - y0
    x0 = x0.long()
    y0 = y0.long()

    out = src.new_zeros(b, c, ho, wo)
    flat = src.reshape(b, c, h * w)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            wgt = ((1 - fx) if dx == 0 else fx) * ((1 - fy) if dy == 0 else fy)
            wgt = torch.where(inside, wgt, torch.zeros_like(wgt)).to(src.dtype)
            idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1)).reshape(b, 1, ho * wo)
            vals = torch.gather(flat, 2, idx.expand(b, c, ho * wo)).reshape(b, c, ho, wo)
            out = out + vals * wgt.unsqueeze(1)
    return out.squeeze(0) if squeeze else out


def grid_influence(grid, src_hw, active=None) -> np.ndarray:
    """Source-plane binary map of pixels with nonzero bilinear weight from
    any (active) output pixel of the given sampling grid."""
    if isinstance(grid, torch.Tensor):
        grid = grid.detach().cpu().numpy()
    hs, ws = src_hw
    if active is None:
        active = np.ones(grid.shape[:2], dtype=bool)
    px = (grid[..., 0][active] + 1) / 2 * (ws - 1)
    py = (grid[..., 1][active] + 1) / 2 * (hs - 1)
    out = np.zeros((hs, ws), dtype=np.float32)
    x0 = np.floor(px).astype(int)
    y0 = np.floor(py).astype(int)
    for dx in (0, 1):
        for dy in (0, 1):
            xi = np.clip(x0 + dx, 0, ws - 1)
            yi = np.clip(y0 + dy, 0, hs - 1)
            wgt = np.abs(1 - dx - (px - x0)) * np.abs(1 - dy - (py - y0))
            sel = wgt > 1e-9
            out[yi[sel], xi[sel]] = 1.0
    return out


# ---------------------------------------------------------------------------
# WarpingNet
# ---------------------------------------------------------------------------

class TPSField(nn.Module):
    """Thin-plate-spline displacement field from a fixed regular control grid.

    Control displacements are the learnable parameters; the interpolation
    system matrix is precomputed, so evaluation is a linear map of the
    parameters plus the r^2 log r^2 kernel of the query points.
    """

    def __init__(self, grid_size: int = 6):
        super().__init__()
        self.grid_size = grid_size
        lin = np.linspace(-1.0, 1.0, grid_size)
        cx, cy = np.meshgrid(lin, lin)
        centers = np.stack([cx.ravel(), cy.ravel()], axis=1)
        k = centers.shape[0]
        d2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            kmat = np.where(d2 > 0, d2 * np.log(d2, where=d2 > 0), 0.0)
        big = np.zeros((k + 3, k + 3))
        big[:k, :k] = kmat
        big[:k, k] = 1.0
        big[:k, k + 1:] = centers
        big[k, :k] = 1.0
        big[k + 1:, :k] = centers.T
        self.register_buffer("solve_mat", torch.tensor(np.linalg.inv(big)[:, :k], dtype=torch.float32))
        self.register_buffer("centers", torch.tensor(centers, dtype=torch.float32))
        self.theta = nn.Parameter(torch.zeros(k, 2))

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        """Displacement at query points (..., 2)."""
        k = self.centers.shape[0]
        wmat = self.solve_mat.to(points.dtype) @ self.theta.to(points.dtype)  # (k+3, 2)
        shape = points.shape
        p = points.reshape(-1, 2)
        d2 = ((p[:, None, :] - self.centers.to(points.dtype)[None, :, :]) ** 2).sum(-1)
        u = d2 * torch.log(d2 + 1e-12)
        disp = u @ wmat[:k] + wmat[k] + p @ wmat[k + 1:]
        return disp.reshape(shape)


class WarpingNet(nn.Module):
    """Affine -> TPS -> refinement composition producing the sampling grid."""

    def __init__(self, out_hw, tps_grid: int = 6, refine_width: int = 32):
        super().__init__()
        self.out_hw = tuple(out_hw)
        self.theta_aff = nn.Parameter(torch.tensor([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        self.tps = TPSField(tps_grid)
        self.refine = nn.Sequential(
            nn.Conv2d(2, refine_width, 3, 1, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(refine_width, refine_width, 3, 1, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(refine_width, 2, 3, 1, 1),
        )
        # residual output starts at exactly zero: composite grid == identity
        nn.init.zeros_(self.refine[-1].weight)
        nn.init.zeros_(self.refine[-1].bias)
        self.register_buffer("base", base_grid(*self.out_hw))

    def forward(self) -> torch.Tensor:
        """The composed sampling grid, shape (H, W, 2)."""
        base = self.base
        a = self.theta_aff.to(base.dtype)
        g1 = base @ a[:, :2].T + a[:, 2]
        g2 = g1 + self.tps(g1)
        res = self.refine(g2.permute(2, 0, 1).unsqueeze(0))[0].permute(1, 2, 0)
        return g2 + res


def build_grid(warping: WarpingNet, out_resolution=None) -> torch.Tensor:
    """Sampling grid of a WarpingNet (optionally checked against a resolution)."""
    if out_resolution is not None and tuple(out_resolution) != warping.out_hw:
        raise ValueError(f"warping net renders {warping.out_hw}, asked for {tuple(out_resolution)}")
    return warping()


# ---------------------------------------------------------------------------
# ShadingNet
# ---------------------------------------------------------------------------

def _conv(cin, cout, stride=1):
    return nn.Sequential(nn.Conv2d(cin, cout, 3, stride, 1), nn.ReLU(inplace=True))


def _tconv(cin, cout):
    return nn.Sequential(nn.ConvTranspose2d(cin, cout, 2, 2), nn.ReLU(inplace=True))


class ShadingNet(nn.Module):
    def __init__(self, widths=(32, 64, 128), direct_width=32):
        super().__init__()
        w0, w1, w2 = widths
        ws = direct_width
        self.backbone0 = _conv(3, w0, 2)
        self.middle0 = _conv(6, w0, 2)
        self.backbone1 = _conv(2 * w0, w1, 2)
        self.middle1 = _conv(w0, w1, 2)
        self.backbone2 = _conv(2 * w1, w2, 2)
        self.middle2 = _conv(w1, w2, 2)
        self.up2 = _tconv(2 * w2, w1)
        self.up1 = _tconv(3 * w1, w0)
        self.up0 = _tconv(3 * w0, w0)
        self.direct = nn.Sequential(_conv(3, ws), _conv(ws, ws), _conv(ws, ws))
        self.out_conv = nn.Conv2d(w0 + ws, 3, 3, 1, 1)

    def forward(self, backbone_in, middle_in, scene):
        b0 = self.backbone0(backbone_in)
        m0 = self.middle0(middle_in)
        b1 = self.backbone1(torch.cat([b0, m0], 1))
        m1 = self.middle1(m0)
        b2 = self.backbone2(torch.cat([b1, m1], 1))
        m2 = self.middle2(m1)
        d2 = self.up2(torch.cat([b2, m2], 1))
        d1 = self.up1(torch.cat([d2, b1, m1], 1))
        d0 = self.up0(torch.cat([d1, b0, m0], 1))
        s = self.direct(scene)
        return self.out_conv(torch.cat([d0, s], 1))


# ---------------------------------------------------------------------------
# PCNet
# ---------------------------------------------------------------------------

@dataclass
class PCNetConfig:
    cam_resolution: tuple = (240, 320)
    prj_resolution: tuple = (256, 256)
    direction: str = "forward"           # "forward" (capture surrogate) or "inverse" (compensation)
    uses_mask_and_rough: bool = True
    widths: tuple = (32, 64, 128)
    direct_width: int = 32
    refine_width: int = 32
    tps_grid: int = 6

    def validate(self):
        if self.direction not in ("forward", "inverse"):
            raise ValueError(f"unknown direction {self.direction!r}")
        hc, wc = self.cam_resolution
        hp, wp = self.prj_resolution
        out = (hc, wc) if self.direction == "forward" else (hp, wp)
        if out[0] % 8 or out[1] % 8:
            raise ValueError(f"output resolution {out} must be divisible by 8")


class PCNet(nn.Module):
    """Project-and-capture surrogate (forward) or compensation model (inverse).

    forward direction:  (x, I_s, I_m) -> inferred capture at camera resolution
    inverse direction:  (target capture, I_s) -> projector input image
    """

    def __init__(self, cfg: PCNetConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.direction = cfg.direction
        self.uses_mask_and_rough = cfg.uses_mask_and_rough and cfg.direction == "forward"
        out_hw = cfg.cam_resolution if cfg.direction == "forward" else cfg.prj_resolution
        self.warping = WarpingNet(out_hw, cfg.tps_grid, cfg.refine_width)
        self.shading = ShadingNet(cfg.widths, cfg.direct_width)

    def forward(self, x, i_s, i_m=None, soft_clamp=None):
        if soft_clamp is None:
            soft_clamp = self.training
        grid = self.warping()
        if self.direction == "forward":
            x_w = bilinear_sample(x, grid)
            if self.uses_mask_and_rough:
                if i_m is None:
                    raise ValueError("forward PCNet with mask needs the direct light mask")
                x_b = x_w * i_m
                rough = x_b * i_s
            else:
                x_b = x_w
                rough = x_w
            out = self.shading(x_b, torch.cat([i_s.expand_as(rough), rough], 1), i_s.expand_as(rough))
        else:
            t_w = bilinear_sample(x, grid)
            s_w = bilinear_sample(i_s.expand_as(x), grid)
            out = self.shading(t_w, torch.cat([s_w, t_w], 1), s_w)
        return softclamp01(out) if soft_clamp else out.clamp(0.0, 1.0)


def pcnet_forward(model: PCNet, x, i_s, i_m, soft_clamp=False):
    """Inferred camera capture under projection of x (forward models only)."""
    if model.direction != "forward":
        raise ValueError("pcnet_forward requires a forward-direction model")
    return model(x, i_s, i_m, soft_clamp=soft_clamp)


def compensate(model: PCNet, target, i_s, soft_clamp=False):
    """Projector input reproducing the target capture (inverse models only)."""
    if model.direction != "inverse":
        raise ValueError("compensate requires an inverse-direction model")
    return model(target, i_s, soft_clamp=soft_clamp)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    iters: int = 2000
    batch_size: int = 24
    lr: float = 1e-3
    lr_drop_fracs: tuple = (0.4, 0.8)    # halve the lr at these fractions of iters
    seed: int = 0
    log_every: int = 100


def _stack_pairs(pairs):
    xs = torch.stack([to_tensor(p) for p, _ in pairs])
    ys = torch.stack([to_tensor(c) for _, c in pairs])
    return xs, ys


def train_pcnet(pairs: CaptureSet, model_cfg: PCNetConfig, train_cfg: TrainConfig = None) -> PCNet:
    """Train a surrogate (or compensation) model on captured sampling pairs.

    Loss is pixel-wise L1 plus (1 - SSIM), optimized with Adam. Deterministic
    for a fixed seed. The training curve is attached as model.history.
    """
    if not pairs.train_pairs:
        raise ValueError("empty training set")
    train_cfg = train_cfg or TrainConfig()
    torch.manual_seed(train_cfg.seed)
    model = PCNet(model_cfg)
    model.train()

    xs, ys = _stack_pairs(pairs.train_pairs)
    if model_cfg.direction == "inverse":
        xs, ys = ys, xs
    i_s = to_tensor(pairs.scene_image).unsqueeze(0)
    i_m = to_tensor(pairs.direct_mask).unsqueeze(0)

    n = xs.shape[0]
    batch = min(train_cfg.batch_size, n)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    drops = {max(1, int(f * train_cfg.iters)) for f in train_cfg.lr_drop_fracs}
    picker = np.random.Generator(np.random.PCG64(train_cfg.seed))

    history = []
    for it in range(train_cfg.iters):
        idx = torch.from_numpy(picker.choice(n, size=batch, replace=False))
        xb = xs[idx]
        yb = ys[idx]
        out = model(xb, i_s, i_m, soft_clamp=True)
        loss = (out - yb).abs().mean() + (1.0 - ssim_t(out, yb).mean())
        opt.zero_grad()
        loss.backward()
        opt.step()
        if it in drops:
            for g in opt.param_groups:
                g["lr"] *= 0.5
        if it % train_cfg.log_every == 0 or it == train_cfg.iters - 1:
            history.append({"iter": it, "loss": float(loss)})

    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    model.history = history
    return model


def train_compensation(pairs: CaptureSet, model_cfg: PCNetConfig, train_cfg: TrainConfig = None) -> PCNet:
    """Inverse-trained compensation model: same regimen, input/output swapped,
    no mask or rough shading."""
    cfg = PCNetConfig(**{**asdict(model_cfg), "direction": "inverse", "uses_mask_and_rough": False})
    cfg.widths = tuple(cfg.widths)
    return train_pcnet(pairs, cfg, train_cfg)


def evaluate_pcnet(model: PCNet, pairs, i_s, i_m, chunk: int = 16):
    """Per-pair metric reports of inferred vs real captures on test pairs."""
    from .imaging import metric_report

    reports = []
    with torch.no_grad():
        for start in range(0, len(pairs), chunk):
            block = pairs[start:start + chunk]
            xs, ys = _stack_pairs(block)
            out = model(xs, i_s, i_m, soft_clamp=False)
            for k in range(out.shape[0]):
                reports.append(metric_report(from_tensor(out[k]), from_tensor(ys[k])))
    return reports


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def setup_fingerprint(setup) -> str:
    h = hashlib.sha256()
    h.update(str(setup.seed).encode())
    h.update(np.ascontiguousarray(setup.albedo).tobytes())
    h.update(np.ascontiguousarray(setup.warp_grid).tobytes())
    return h.hexdigest()[:16]


def save_pcnet(model: PCNet, path, fingerprint: str = "") -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "config": asdict(model.cfg),
            "fingerprint": fingerprint,
            "state_dict": model.state_dict(),
            "history": getattr(model, "history", []),
        },
        path,
    )


def load_pcnet(path, cam_resolution=None, prj_resolution=None) -> PCNet:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('format_version')}")
    cfg = blob["config"]
    cfg["cam_resolution"] = tuple(cfg["cam_resolution"])
    cfg["prj_resolution"] = tuple(cfg["prj_resolution"])
    cfg["widths"] = tuple(cfg["widths"])
    cfg = PCNetConfig(**cfg)
    if cam_resolution is not None and tuple(cam_resolution) != cfg.cam_resolution:
        raise ValueError(f"checkpoint camera resolution {cfg.cam_resolution} != setup {tuple(cam_resolution)}")
    if prj_resolution is not None and tuple(prj_resolution) != cfg.prj_resolution:
        raise ValueError(f"checkpoint projector resolution {cfg.prj_resolution} != setup {tuple(prj_resolution)}")
    model = PCNet(cfg)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    model.history = blob.get("history", [])
    model.fingerprint = blob.get("fingerprint", "")
    return model
