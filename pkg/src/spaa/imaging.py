"""
Image container, color-space conversion and image similarity metrics.

All stealthiness metrics used by the attack optimizers, the surrogate
training loss and the benchmark tables live here. Convention for reported
numbers (matching the benchmark tables):

  * L2   - mean over pixels of the Euclidean norm of the RGB difference,
           channel values scaled to 0-255 before differencing.
  * Linf - max absolute per-channel difference, 0-255 scale.
  * dE   - mean per-pixel CIEDE2000 color difference.
  * SSIM - mean structural similarity, 11x11 Gaussian window (sigma 1.5),
           computed per channel and averaged over RGB.

Images are stored single precision; all metric computations run in double
precision. The tensor-level functions (``*_t``) operate on BCHW torch
tensors and are differentiable, so they double as loss terms.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage


class Colorspace(enum.Enum):
    SRGB_GAMMA = "srgb_gamma"
    SRGB_LINEAR = "srgb_linearized"
    CIELAB = "cielab"


@dataclass
class Image:
    """H x W x 3 float image, RGB channel order.

    sRGB variants are bounded in [0, 1]; CIELAB carries L in [0, 100] and
    unbounded a*/b*. Pixels are kept float32.
    """

    pixels: np.ndarray
    colorspace: Colorspace = Colorspace.SRGB_GAMMA

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got shape {px.shape}")
        if px.shape[0] < 8 or px.shape[1] < 8:
            raise ValueError(f"image too small: {px.shape[0]}x{px.shape[1]}, need at least 8x8")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixels contain non-finite values")
        if self.colorspace in (Colorspace.SRGB_GAMMA, Colorspace.SRGB_LINEAR):
            if px.min() < 0.0 or px.max() > 1.0:
                raise ValueError("sRGB pixels must lie in [0, 1]")
        self.pixels = px

    @property
    def shape(self):
        return self.pixels.shape

    @property
    def resolution(self):
        """(H, W) tuple."""
        return self.pixels.shape[0], self.pixels.shape[1]


def full_image(h, w, rgb, colorspace=Colorspace.SRGB_GAMMA) -> Image:
    """Constant image of the given color."""
    px = np.empty((h, w, 3), dtype=np.float32)
    px[:] = np.asarray(rgb, dtype=np.float32)
    return Image(px, colorspace)


def gray_image(h, w, level=128.0 / 255.0) -> Image:
    """Plain gray image (default: the gray projector input level 128/255)."""
    return full_image(h, w, (level, level, level))


def load_png(path) -> Image:
    """Read an 8-bit sRGB PNG; values become float [0,1] by dividing by 255 exactly."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return Image(arr / 255.0, Colorspace.SRGB_GAMMA)


def save_png(img: Image, path) -> None:
    """Write an image as 8-bit PNG (values rounded to the nearest of 256 levels)."""
    if img.colorspace == Colorspace.CIELAB:
        raise ValueError("cannot save a CIELAB image as PNG; convert to sRGB first")
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def to_tensor(img: Image, dtype=torch.float32) -> torch.Tensor:
    """Image -> CHW torch tensor."""
    return torch.from_numpy(np.ascontiguousarray(img.pixels.transpose(2, 0, 1))).to(dtype)


def from_tensor(t: torch.Tensor, colorspace=Colorspace.SRGB_GAMMA) -> Image:
    """CHW (or 1CHW) torch tensor -> Image."""
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise ValueError("expected a single image tensor")
        t = t[0]
    arr = t.detach().to(torch.float32).cpu().numpy().transpose(1, 2, 0)
    return Image(arr, colorspace)


def _check_pair(a: Image, b: Image):
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"shape mismatch: {a.pixels.shape} vs {b.pixels.shape}")
    if a.colorspace != b.colorspace:
        raise ValueError(f"colorspace mismatch: {a.colorspace} vs {b.colorspace}")


# ---------------------------------------------------------------------------
# sRGB -> CIELAB (D65)
# ---------------------------------------------------------------------------

# sRGB linear-RGB -> XYZ (D65), IEC 61966-2-1
_RGB2XYZ = torch.tensor(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ],
    dtype=torch.float64,
)
# white point = the matrix row sums, so pure white maps to exactly (1,1,1)
_WHITE = _RGB2XYZ.sum(dim=1)


def srgb_to_linear_t(x: torch.Tensor) -> torch.Tensor:
    """Undo the sRGB transfer curve (gamma-encoded [0,1] -> linear [0,1])."""
    return torch.where(x <= 0.04045, x / 12.92, ((x.clamp(min=0.04045) + 0.055) / 1.055) ** 2.4)


def srgb_to_lab_t(rgb: torch.Tensor) -> torch.Tensor:
    """BCHW gamma-encoded sRGB -> BCHW CIELAB under D65. Differentiable."""
    lin = srgb_to_linear_t(rgb)
    m = _RGB2XYZ.to(dtype=rgb.dtype, device=rgb.device)
    xyz = torch.einsum("ij,bjhw->bihw", m, lin)
    xyz = xyz / _WHITE.to(dtype=rgb.dtype, device=rgb.device).view(1, 3, 1, 1)
    delta = 6.0 / 29.0
    # linear branch below (6/29)^3 keeps the gradient bounded near zero
    f = torch.where(
        xyz > delta**3,
        xyz.clamp(min=delta**3) ** (1.0 / 3.0),
        xyz / (3.0 * delta**2) + 4.0 / 29.0,
    )
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    lab = torch.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], dim=1)
    return lab


def srgb_to_lab(a: Image) -> Image:
    """Convert a gamma-encoded sRGB image to CIELAB (D65 white point)."""
    if a.colorspace != Colorspace.SRGB_GAMMA:
        raise ValueError(f"srgb_to_lab expects srgb_gamma input, got {a.colorspace}")
    lab = srgb_to_lab_t(to_tensor(a, torch.float64).unsqueeze(0))[0]
    return Image(lab.numpy().transpose(1, 2, 0).astype(np.float32), Colorspace.CIELAB)


# ---------------------------------------------------------------------------
# CIEDE2000
# ---------------------------------------------------------------------------

def ciede2000_t(lab1: torch.Tensor, lab2: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Per-pixel CIEDE2000 between two BCHW CIELAB tensors -> B x H x W map.

    Differentiable; the eps guards keep gradients finite at zero chroma and
    perturb the value by far less than the 1e-4 verification tolerance.
    """
    l1, a1, b1 = lab1[:, 0], lab1[:, 1], lab1[:, 2]
    l2, a2, b2 = lab2[:, 0], lab2[:, 1], lab2[:, 2]
    pow25_7 = 25.0**7

    c1 = torch.sqrt(a1 * a1 + b1 * b1 + eps)
    c2 = torch.sqrt(a2 * a2 + b2 * b2 + eps)
    c_bar = 0.5 * (c1 + c2)
    c_bar7 = c_bar**7
    g = 0.5 * (1.0 - torch.sqrt(c_bar7 / (c_bar7 + pow25_7)))

    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = torch.sqrt(a1p * a1p + b1 * b1 + eps)
    c2p = torch.sqrt(a2p * a2p + b2 * b2 + eps)

    # hue angles in [0, 2pi); at the exact origin atan2 is replaced by
    # atan2(0, 1) = 0 so both the value and the gradient stay finite there
    two_pi = 2.0 * torch.pi
    origin1 = (a1p == 0) & (b1 == 0)
    origin2 = (a2p == 0) & (b2 == 0)
    h1p = torch.atan2(b1, torch.where(origin1, torch.ones_like(a1p), a1p))
    h1p = torch.where(h1p < 0, h1p + two_pi, h1p)
    h2p = torch.atan2(b2, torch.where(origin2, torch.ones_like(a2p), a2p))
    h2p = torch.where(h2p < 0, h2p + two_pi, h2p)

    dlp = l2 - l1
    dcp = c2p - c1p

    zero_chroma = (c1p * c2p) < 1e-8
    dhp = h2p - h1p
    dhp = torch.where(dhp > torch.pi, dhp - two_pi, dhp)
    dhp = torch.where(dhp < -torch.pi, dhp + two_pi, dhp)
    dhp = torch.where(zero_chroma, torch.zeros_like(dhp), dhp)
    dHp = 2.0 * torch.sqrt(c1p * c2p + eps) * torch.sin(dhp / 2.0)

    lp_bar = 0.5 * (l1 + l2)
    cp_bar = 0.5 * (c1p + c2p)

    hsum = h1p + h2p
    habs = torch.abs(h1p - h2p)
    hp_bar = torch.where(habs <= torch.pi, 0.5 * hsum, 0.5 * hsum + torch.pi)
    hp_bar = torch.where((habs > torch.pi) & (hsum >= two_pi), 0.5 * hsum - torch.pi, hp_bar)
    hp_bar = torch.where(zero_chroma, hsum, hp_bar)

    t = (
        1.0
        - 0.17 * torch.cos(hp_bar - torch.pi / 6.0)
        + 0.24 * torch.cos(2.0 * hp_bar)
        + 0.32 * torch.cos(3.0 * hp_bar + torch.pi / 30.0)
        - 0.20 * torch.cos(4.0 * hp_bar - 63.0 * torch.pi / 180.0)
    )
    hp_bar_deg = hp_bar * (180.0 / torch.pi)
    dtheta = 30.0 * torch.exp(-(((hp_bar_deg - 275.0) / 25.0) ** 2))

    cp_bar7 = cp_bar**7
    rc = 2.0 * torch.sqrt(cp_bar7 / (cp_bar7 + pow25_7))
    lm = (lp_bar - 50.0) ** 2
    sl = 1.0 + 0.015 * lm / torch.sqrt(20.0 + lm)
    sc = 1.0 + 0.045 * cp_bar
    sh = 1.0 + 0.015 * cp_bar * t
    rt = -torch.sin(2.0 * dtheta * torch.pi / 180.0) * rc

    fl = dlp / sl
    fc = dcp / sc
    fh = dHp / sh
    return torch.sqrt(fl * fl + fc * fc + fh * fh + rt * fc * fh + eps)


def ciede2000(a: Image, b: Image) -> float:
    """Mean per-pixel CIEDE2000 between two gamma-encoded sRGB images."""
    _check_pair(a, b)
    if a.colorspace != Colorspace.SRGB_GAMMA:
        raise ValueError("ciede2000 expects srgb_gamma inputs")
    if np.array_equal(a.pixels, b.pixels):
        return 0.0
    ta = srgb_to_lab_t(to_tensor(a, torch.float64).unsqueeze(0))
    tb = srgb_to_lab_t(to_tensor(b, torch.float64).unsqueeze(0))
    return float(ciede2000_t(ta, tb).mean())


def ciede2000_lab(lab_a, lab_b) -> float:
    """CIEDE2000 between two single CIELAB triples (used for verification pairs)."""
    ta = torch.tensor(lab_a, dtype=torch.float64).view(1, 3, 1, 1)
    tb = torch.tensor(lab_b, dtype=torch.float64).view(1, 3, 1, 1)
    return float(ciede2000_t(ta, tb)[0, 0, 0])


# ---------------------------------------------------------------------------
# L2 / Linf
# ---------------------------------------------------------------------------

def l2_mean_t(a: torch.Tensor, b: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Mean per-pixel RGB Euclidean distance on 0-255 scale, per batch item.

    Differentiable; this is the perturbation size `d` steering the attack.
    """
    diff = (a - b) * 255.0
    return torch.sqrt((diff * diff).sum(dim=1) + eps).mean(dim=(-2, -1))


def l2_distance(a: Image, b: Image) -> float:
    """Mean per-pixel RGB Euclidean distance, channel values on 0-255 scale."""
    _check_pair(a, b)
    if np.array_equal(a.pixels, b.pixels):
        return 0.0
    diff = (a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) * 255.0
    return float(np.sqrt((diff * diff).sum(axis=2)).mean())


def linf_distance(a: Image, b: Image) -> float:
    """Max absolute per-channel difference, 0-255 scale."""
    _check_pair(a, b)
    diff = (a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) * 255.0
    return float(np.abs(diff).max())


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _gaussian_kernel(channels, dtype, device):
    half = (_SSIM_WINDOW - 1) / 2.0
    coords = torch.arange(_SSIM_WINDOW, dtype=dtype, device=device) - half
    g = torch.exp(-(coords**2) / (2.0 * _SSIM_SIGMA**2))
    g = g / g.sum()
    k2d = torch.outer(g, g)
    return k2d.expand(channels, 1, _SSIM_WINDOW, _SSIM_WINDOW).contiguous()


def ssim_t(a: torch.Tensor, b: torch.Tensor, data_range: float = 1.0) -> torch.Tensor:
    """Mean SSIM between BCHW tensors, per batch item. Differentiable.

    11x11 Gaussian window (sigma 1.5), valid-mode windows, standard
    stabilizing constants, per channel then averaged.
    """
    if a.shape[-2] < _SSIM_WINDOW or a.shape[-1] < _SSIM_WINDOW:
        raise ValueError(
            f"image {a.shape[-2]}x{a.shape[-1]} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window"
        )
    c = a.shape[1]
    kern = _gaussian_kernel(c, a.dtype, a.device)
    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2

    mu_a = F.conv2d(a, kern, groups=c)
    mu_b = F.conv2d(b, kern, groups=c)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    sig_aa = F.conv2d(a * a, kern, groups=c) - mu_aa
    sig_bb = F.conv2d(b * b, kern, groups=c) - mu_bb
    sig_ab = F.conv2d(a * b, kern, groups=c) - mu_ab

    ssim_map = ((2.0 * mu_ab + c1) * (2.0 * sig_ab + c2)) / (
        (mu_aa + mu_bb + c1) * (sig_aa + sig_bb + c2)
    )
    return ssim_map.mean(dim=(1, 2, 3))


def ssim(a: Image, b: Image) -> float:
    """Mean structural similarity between two images in the same colorspace."""
    _check_pair(a, b)
    ta = to_tensor(a, torch.float64).unsqueeze(0)
    tb = to_tensor(b, torch.float64).unsqueeze(0)
    return float(ssim_t(ta, tb))


# ---------------------------------------------------------------------------
# Metric report
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    """The four stealthiness numbers reported by the benchmark tables."""

    l2: float
    linf: float
    delta_e: float
    ssim: float

    def to_dict(self):
        return {"L2": self.l2, "Linf": self.linf, "dE": self.delta_e, "SSIM": self.ssim}


def metric_report(a: Image, b: Image) -> MetricReport:
    """All four similarity metrics between two gamma-encoded sRGB images."""
    return MetricReport(
        l2=l2_distance(a, b),
        linf=linf_distance(a, b),
        delta_e=ciede2000(a, b),
        ssim=ssim(a, b),
    )
