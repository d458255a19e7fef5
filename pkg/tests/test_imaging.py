"""Metric oracles and properties for the imaging module.

The reference implementations in this file are deliberately independent of
the package: scalar loops and textbook formulas, used to cross-check the
vectorized code.
"""
import math

import numpy as np
import pytest
import torch

from spaa.imaging import (
    Colorspace,
    Image,
    MetricReport,
    ciede2000,
    ciede2000_lab,
    full_image,
    gray_image,
    l2_distance,
    linf_distance,
    load_png,
    metric_report,
    save_png,
    srgb_to_lab,
    ssim,
    ssim_t,
    to_tensor,
)


def rand_image(rng, h=16, w=16):
    return Image(rng.random((h, w, 3)).astype(np.float32))


# ---------------------------------------------------------------------------
# scalar reference implementations (oracles)
# ---------------------------------------------------------------------------

def l2_oracle(a, b):
    """Per-pixel scalar loop, 0-255 scale."""
    total = 0.0
    h, w, _ = a.shape
    for i in range(h):
        for j in range(w):
            s = 0.0
            for c in range(3):
                d = (float(a[i, j, c]) - float(b[i, j, c])) * 255.0
                s += d * d
            total += math.sqrt(s)
    return total / (h * w)


def linf_oracle(a, b):
    best = 0.0
    h, w, _ = a.shape
    for i in range(h):
        for j in range(w):
            for c in range(3):
                best = max(best, abs(float(a[i, j, c]) - float(b[i, j, c])) * 255.0)
    return best


def srgb_to_lab_oracle(rgb):
    """Scalar sRGB (gamma, [0,1]) -> CIELAB via the standard D65 formulas."""
    def linearize(u):
        return u / 12.92 if u <= 0.04045 else ((u + 0.055) / 1.055) ** 2.4

    r, g, b = (linearize(float(v)) for v in rgb)
    x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b
    y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b
    z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b
    xn = 0.4124564 + 0.3575761 + 0.1804375
    yn = 0.2126729 + 0.7151522 + 0.0721750
    zn = 0.0193339 + 0.1191920 + 0.9503041

    def f(t):
        d = 6.0 / 29.0
        return t ** (1.0 / 3.0) if t > d**3 else t / (3 * d * d) + 4.0 / 29.0

    fx, fy, fz = f(x / xn), f(y / yn), f(z / zn)
    return 116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)


def ciede2000_oracle(lab1, lab2):
    """Scalar CIEDE2000 (Sharma et al. formulation), math library only."""
    L1, a1, b1 = lab1
    L2, a2, b2 = lab2
    C1 = math.hypot(a1, b1)
    C2 = math.hypot(a2, b2)
    C_bar = 0.5 * (C1 + C2)
    G = 0.5 * (1 - math.sqrt(C_bar**7 / (C_bar**7 + 25.0**7)))
    a1p, a2p = (1 + G) * a1, (1 + G) * a2
    C1p = math.hypot(a1p, b1)
    C2p = math.hypot(a2p, b2)

    def hue(ap, bp):
        if ap == 0 and bp == 0:
            return 0.0
        h = math.atan2(bp, ap)
        return h + 2 * math.pi if h < 0 else h

    h1p, h2p = hue(a1p, b1), hue(a2p, b2)

    dLp = L2 - L1
    dCp = C2p - C1p
    if C1p * C2p == 0:
        dhp = 0.0
    else:
        dhp = h2p - h1p
        if dhp > math.pi:
            dhp -= 2 * math.pi
        elif dhp < -math.pi:
            dhp += 2 * math.pi
    dHp = 2 * math.sqrt(C1p * C2p) * math.sin(dhp / 2)

    Lp_bar = 0.5 * (L1 + L2)
    Cp_bar = 0.5 * (C1p + C2p)
    hsum = h1p + h2p
    if C1p * C2p == 0:
        hp_bar = hsum
    elif abs(h1p - h2p) <= math.pi:
        hp_bar = 0.5 * hsum
    elif hsum < 2 * math.pi:
        hp_bar = 0.5 * hsum + math.pi
    else:
        hp_bar = 0.5 * hsum - math.pi

    T = (
        1
        - 0.17 * math.cos(hp_bar - math.pi / 6)
        + 0.24 * math.cos(2 * hp_bar)
        + 0.32 * math.cos(3 * hp_bar + math.pi / 30)
        - 0.20 * math.cos(4 * hp_bar - 63 * math.pi / 180)
    )
    dtheta = 30.0 * math.exp(-(((hp_bar * 180 / math.pi - 275) / 25) ** 2))
    Rc = 2 * math.sqrt(Cp_bar**7 / (Cp_bar**7 + 25.0**7))
    lm = (Lp_bar - 50) ** 2
    Sl = 1 + 0.015 * lm / math.sqrt(20 + lm)
    Sc = 1 + 0.045 * Cp_bar
    Sh = 1 + 0.015 * Cp_bar * T
    Rt = -math.sin(2 * dtheta * math.pi / 180) * Rc
    fl, fc, fh = dLp / Sl, dCp / Sc, dHp / Sh
    return math.sqrt(fl * fl + fc * fc + fh * fh + Rt * fc * fh)


def ssim_oracle(a, b):
    """Windowed scalar SSIM: 11x11 Gaussian (sigma 1.5), valid mode, per channel."""
    win, sigma = 11, 1.5
    half = (win - 1) / 2.0
    g = np.exp(-((np.arange(win) - half) ** 2) / (2 * sigma**2))
    g /= g.sum()
    k = np.outer(g, g)
    c1, c2 = 0.01**2, 0.03**2
    h, w, _ = a.shape
    vals = []
    for ch in range(3):
        x = a[:, :, ch].astype(np.float64)
        y = b[:, :, ch].astype(np.float64)
        for i in range(h - win + 1):
            for j in range(w - win + 1):
                px = x[i : i + win, j : j + win]
                py = y[i : i + win, j : j + win]
                mx = (k * px).sum()
                my = (k * py).sum()
                vxx = (k * px * px).sum() - mx * mx
                vyy = (k * py * py).sum() - my * my
                vxy = (k * px * py).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * vxy + c2))
                    / ((mx * mx + my * my + c1) * (vxx + vyy + c2))
                )
    return float(np.mean(vals))


# published CIEDE2000 verification pairs: (L1,a1,b1), (L2,a2,b2), dE00
CIEDE2000_PAIRS = [
    ((50.0000, 2.6772, -79.7751), (50.0000, 0.0000, -82.7485), 2.0425),
    ((50.0000, 3.1571, -77.2803), (50.0000, 0.0000, -82.7485), 2.8615),
    ((50.0000, 2.8361, -74.0200), (50.0000, 0.0000, -82.7485), 3.4412),
    ((50.0000, -1.3802, -84.2814), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, -1.1848, -84.8006), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, -0.9009, -85.5211), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, 0.0000, 0.0000), (50.0000, -1.0000, 2.0000), 2.3669),
    ((50.0000, -1.0000, 2.0000), (50.0000, 0.0000, 0.0000), 2.3669),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0009), 7.1792),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0010), 7.1792),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0011), 7.2195),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0012), 7.2195),
    ((50.0000, -0.0010, 2.4900), (50.0000, 0.0009, -2.4900), 4.8045),
    ((50.0000, -0.0010, 2.4900), (50.0000, 0.0010, -2.4900), 4.8045),
    ((50.0000, -0.0010, 2.4900), (50.0000, 0.0011, -2.4900), 4.7461),
    ((50.0000, 2.5000, 0.0000), (50.0000, 0.0000, -2.5000), 4.3065),
    ((50.0000, 2.5000, 0.0000), (73.0000, 25.0000, -18.0000), 27.1492),
    ((50.0000, 2.5000, 0.0000), (61.0000, -5.0000, 29.0000), 22.8977),
    ((50.0000, 2.5000, 0.0000), (56.0000, -27.0000, -3.0000), 31.9030),
    ((50.0000, 2.5000, 0.0000), (58.0000, 24.0000, 15.0000), 19.4535),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.1736, 0.5854), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.2972, 0.0000), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 1.8634, 0.5757), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.2592, 0.3350), 1.0000),
    ((60.2574, -34.0099, 36.2677), (60.4626, -34.1751, 39.4387), 1.2644),
    ((63.0109, -31.0961, -5.8663), (62.8187, -29.7946, -4.0864), 1.2630),
    ((61.2901, 3.7196, -5.3901), (61.4292, 2.2480, -4.9620), 1.8731),
    ((35.0831, -44.1164, 3.7933), (35.0232, -40.0716, 1.5901), 1.8645),
    ((22.7233, 20.0904, -46.6940), (23.0331, 14.9730, -42.5619), 2.0373),
    ((36.4612, 47.8580, 18.3852), (36.2715, 50.5065, 21.2231), 1.4146),
    ((90.8027, -2.0831, 1.4410), (91.1528, -1.6435, 0.0447), 1.4441),
    ((90.9257, -0.5406, -0.9208), (88.6381, -0.8985, -0.7239), 1.5381),
    ((6.7747, -0.2908, -2.4247), (5.8714, -0.0985, -2.2286), 0.6377),
    ((2.0776, 0.0795, -1.1350), (0.9033, -0.0636, -0.5514), 0.9082),
]


# ---------------------------------------------------------------------------
# L2 / Linf
# ---------------------------------------------------------------------------

def test_l2_identity_is_zero():
    rng = np.random.default_rng(0)
    img = rand_image(rng)
    assert l2_distance(img, img) == 0.0


def test_l2_black_vs_white():
    a = full_image(8, 8, (0, 0, 0))
    b = full_image(8, 8, (1, 1, 1))
    assert l2_distance(a, b) == pytest.approx(255.0 * math.sqrt(3.0), abs=1e-9)


def test_l2_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    a, b = rand_image(rng), rand_image(rng)
    assert l2_distance(a, b) == pytest.approx(l2_oracle(a.pixels, b.pixels), abs=1e-9)


def test_linf_identity_and_single_pixel():
    rng = np.random.default_rng(2)
    img = rand_image(rng)
    assert linf_distance(img, img) == 0.0
    px = img.pixels.copy()
    px[3, 4, 1] = np.float32(px[3, 4, 1] - 10.0 / 255.0 if px[3, 4, 1] > 0.5 else px[3, 4, 1] + 10.0 / 255.0)
    other = Image(px)
    assert linf_distance(img, other) == pytest.approx(10.0, abs=1e-4)


def test_linf_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    a, b = rand_image(rng), rand_image(rng)
    assert linf_distance(a, b) == pytest.approx(linf_oracle(a.pixels, b.pixels), abs=1e-9)


def test_metric_symmetry_and_bounds():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a, b = rand_image(rng), rand_image(rng)
        assert l2_distance(a, b) == pytest.approx(l2_distance(b, a), abs=1e-12)
        assert linf_distance(a, b) == linf_distance(b, a)
        assert linf_distance(a, b) <= 255.0
        assert l2_distance(a, b) <= 255.0 * math.sqrt(3.0)


def test_triangle_inequality():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a, b, c = rand_image(rng), rand_image(rng), rand_image(rng)
        assert l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-9
        assert linf_distance(a, c) <= linf_distance(a, b) + linf_distance(b, c) + 1e-9


def test_shape_mismatch_raises():
    a = full_image(8, 8, (0.5, 0.5, 0.5))
    b = full_image(8, 10, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        l2_distance(a, b)
    with pytest.raises(ValueError):
        linf_distance(a, b)
    with pytest.raises(ValueError):
        ciede2000(a, b)


# ---------------------------------------------------------------------------
# sRGB -> Lab
# ---------------------------------------------------------------------------

def test_lab_white_and_black():
    white = srgb_to_lab(full_image(8, 8, (1, 1, 1)))
    assert white.colorspace == Colorspace.CIELAB
    L, a, b = white.pixels[0, 0]
    assert L == pytest.approx(100.0, abs=1e-3)
    assert abs(a) < 0.01 and abs(b) < 0.01
    black = srgb_to_lab(full_image(8, 8, (0, 0, 0)))
    assert np.allclose(black.pixels, 0.0, atol=1e-5)


def test_lab_mid_gray_matches_oracle():
    g = 118.0 / 255.0
    out = srgb_to_lab(full_image(8, 8, (g, g, g))).pixels[0, 0]
    ref = srgb_to_lab_oracle((g, g, g))
    assert np.allclose(out, ref, atol=1e-3)


def test_lab_random_matches_oracle():
    rng = np.random.default_rng(6)
    img = rand_image(rng, 8, 8)
    out = srgb_to_lab(img).pixels
    for i, j in [(0, 0), (3, 5), (7, 7)]:
        ref = srgb_to_lab_oracle(img.pixels[i, j])
        assert np.allclose(out[i, j], ref, atol=1e-3)


def test_lab_rejects_wrong_colorspace():
    img = full_image(8, 8, (0.5, 0.5, 0.5), Colorspace.SRGB_LINEAR)
    with pytest.raises(ValueError):
        srgb_to_lab(img)


# ---------------------------------------------------------------------------
# CIEDE2000
# ---------------------------------------------------------------------------

def test_ciede2000_identity_is_zero():
    rng = np.random.default_rng(7)
    img = rand_image(rng)
    assert ciede2000(img, img) == 0.0


def test_ciede2000_verification_pairs():
    for lab1, lab2, expected in CIEDE2000_PAIRS:
        got = ciede2000_lab(lab1, lab2)
        ref = ciede2000_oracle(lab1, lab2)
        assert abs(ref - expected) < 2e-4, f"oracle vs published: {lab1} {lab2}"
        assert abs(got - ref) < 1e-4, f"implementation vs oracle: {lab1} {lab2}"
        assert abs(got - expected) < 1e-4, f"implementation vs published: {lab1} {lab2}"


def test_ciede2000_symmetry():
    rng = np.random.default_rng(8)
    for _ in range(5):
        a, b = rand_image(rng), rand_image(rng)
        assert ciede2000(a, b) == pytest.approx(ciede2000(b, a), abs=1e-9)


def test_ciede2000_positive_on_distinct():
    a = full_image(8, 8, (0.3, 0.5, 0.7))
    b = full_image(8, 8, (0.3, 0.5, 0.71))
    assert ciede2000(a, b) > 0.0


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def test_ssim_identity_is_one():
    rng = np.random.default_rng(9)
    img = rand_image(rng)
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_inverted_image_below_half():
    rng = np.random.default_rng(10)
    px = (0.25 + 0.5 * rng.random((16, 16, 3))).astype(np.float32)
    a = Image(px)
    b = Image(1.0 - px)
    ref = ssim_oracle(a.pixels, b.pixels)
    got = ssim(a, b)
    assert got == pytest.approx(ref, abs=1e-9)
    assert got < 0.5
    assert ref < 0.5


def test_ssim_matches_oracle_random():
    rng = np.random.default_rng(11)
    a, b = rand_image(rng), rand_image(rng)
    assert ssim(a, b) == pytest.approx(ssim_oracle(a.pixels, b.pixels), abs=1e-9)


def test_ssim_symmetry():
    rng = np.random.default_rng(12)
    a, b = rand_image(rng), rand_image(rng)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_too_small_raises():
    a = full_image(10, 10, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        ssim(a, a)


def test_ssim_gradient_matches_finite_differences():
    # analytic gradient of (1 - SSIM) in double precision vs central differences
    rng = np.random.default_rng(13)
    a = torch.tensor(rng.random((1, 3, 16, 16)), dtype=torch.float64, requires_grad=True)
    b = torch.tensor(rng.random((1, 3, 16, 16)), dtype=torch.float64)
    loss = 1.0 - ssim_t(a, b).mean()
    grad = torch.autograd.grad(loss, a)[0]

    h = 1e-6
    # interior probes: border pixels have near-zero window support and their
    # finite differences are dominated by cancellation noise
    idx = [(0, 0, 4, 4), (0, 1, 8, 3), (0, 2, 10, 11), (0, 0, 7, 9), (0, 1, 5, 12)]
    for pos in idx:
        ap = a.detach().clone()
        am = a.detach().clone()
        ap[pos] += h
        am[pos] -= h
        fd = ((1.0 - ssim_t(ap, b).mean()) - (1.0 - ssim_t(am, b).mean())) / (2 * h)
        ana = grad[pos]
        denom = max(abs(float(fd)), abs(float(ana)), 1e-12)
        assert abs(float(fd) - float(ana)) / denom < 1e-3


# ---------------------------------------------------------------------------
# report, container, IO
# ---------------------------------------------------------------------------

def test_metric_report_identity():
    rng = np.random.default_rng(14)
    img = rand_image(rng)
    rep = metric_report(img, img)
    assert isinstance(rep, MetricReport)
    assert rep.l2 == 0.0 and rep.linf == 0.0 and rep.delta_e == 0.0
    assert rep.ssim == pytest.approx(1.0, abs=1e-12)
    assert all(np.isfinite(v) for v in rep.to_dict().values())


def test_image_validation():
    with pytest.raises(ValueError):
        Image(np.zeros((4, 4, 3), np.float32))  # too small
    with pytest.raises(ValueError):
        Image(np.zeros((8, 8, 4), np.float32))  # wrong channels
    with pytest.raises(ValueError):
        Image(np.full((8, 8, 3), np.nan, np.float32))
    with pytest.raises(ValueError):
        Image(np.full((8, 8, 3), 1.5, np.float32))  # out of range for sRGB


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(15)
    # quantized pixels survive a PNG roundtrip exactly
    px = (rng.integers(0, 256, (16, 16, 3)) / 255.0).astype(np.float32)
    img = Image(px)
    p = tmp_path / "img.png"
    save_png(img, p)
    back = load_png(p)
    assert np.array_equal(back.pixels, img.pixels)
    assert back.colorspace == Colorspace.SRGB_GAMMA


def test_gray_image_level():
    g = gray_image(8, 8)
    assert np.allclose(g.pixels, 128.0 / 255.0)


def test_to_tensor_roundtrip():
    rng = np.random.default_rng(16)
    img = rand_image(rng)
    t = to_tensor(img)
    assert t.shape == (3, 16, 16)
    assert np.allclose(t.numpy().transpose(1, 2, 0), img.pixels)
