"""Image quality and dataset statistics metrics.

PSNR and SSIM operate on [0,1] luminance fields; 3-channel inputs are
reduced with the 0.299/0.587/0.114 weights first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .errors import DimensionMismatch, TooSmall

PSNR_CAP_DB = 100.0
_MSE_FLOOR = 1e-12

# SSIM constants: 11x11 Gaussian window, sigma 1.5, K1/K2 = 0.01/0.03, L = 1
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_luminance(image: np.ndarray) -> np.ndarray:
    """Collapse an optional 3-channel image onto [0,1] luminance."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 3:
        return image @ _LUMA_WEIGHTS
    raise DimensionMismatch(f"expected HxW or HxWx3 image, got shape {image.shape}")


def _check_pair(pred, gt):
    pred = to_luminance(pred)
    gt = to_luminance(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def psnr(pred: np.ndarray, gt: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for identical inputs."""
    pred, gt = _check_pair(pred, gt)
    mse = float(np.mean((pred - gt) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean local structural similarity over fully covered 11x11 windows."""
    pred, gt = _check_pair(pred, gt)
    if min(pred.shape) < SSIM_WINDOW:
        raise TooSmall(
            f"image sides {pred.shape} must be at least {SSIM_WINDOW} for SSIM"
        )
    window = _gaussian_window()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    mu1 = convolve2d(pred, window, mode="valid")
    mu2 = convolve2d(gt, window, mode="valid")
    s11 = convolve2d(pred * pred, window, mode="valid") - mu1 * mu1
    s22 = convolve2d(gt * gt, window, mode="valid") - mu2 * mu2
    s12 = convolve2d(pred * gt, window, mode="valid") - mu1 * mu2

    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


def occlusion_fraction(mask: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of pixels whose mask value exceeds the threshold."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.size == 0:
        return 0.0
    return float(np.mean(mask > threshold))


@dataclass
class FrameMetrics:
    frame: int
    psnr_db: float
    ssim: float
    occlusion_fraction: float | None = None


@dataclass
class MetricReport:
    """Per-frame quality metrics with aggregate means."""

    frames: list[FrameMetrics] = field(default_factory=list)

    def add(self, frame, psnr_db, ssim_value, occlusion=None):
        self.frames.append(FrameMetrics(frame, psnr_db, ssim_value, occlusion))

    @property
    def mean_psnr_db(self) -> float:
        return float(np.mean([f.psnr_db for f in self.frames])) if self.frames else 0.0

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([f.ssim for f in self.frames])) if self.frames else 0.0

    @property
    def mean_occlusion_fraction(self) -> float | None:
        vals = [f.occlusion_fraction for f in self.frames if f.occlusion_fraction is not None]
        return float(np.mean(vals)) if vals else None

    def to_dict(self) -> dict:
        frames = []
        for f in self.frames:
            entry = {"frame": f.frame, "psnr_db": f.psnr_db, "ssim": f.ssim}
            if f.occlusion_fraction is not None:
                entry["occlusion_fraction"] = f.occlusion_fraction
            frames.append(entry)
        out = {
            "frames": frames,
            "mean_psnr_db": self.mean_psnr_db,
            "mean_ssim": self.mean_ssim,
        }
        if self.mean_occlusion_fraction is not None:
            out["mean_occlusion_fraction"] = self.mean_occlusion_fraction
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = []
        for f in self.frames:
            line = f"frame: {f.frame}  psnr_db: {f.psnr_db:.4f}  ssim: {f.ssim:.6f}"
            if f.occlusion_fraction is not None:
                line += f"  occlusion_fraction: {f.occlusion_fraction:.4f}"
            lines.append(line)
        lines.append(f"mean_psnr_db: {self.mean_psnr_db:.4f}")
        lines.append(f"mean_ssim: {self.mean_ssim:.6f}")
        if self.mean_occlusion_fraction is not None:
            lines.append(f"mean_occlusion_fraction: {self.mean_occlusion_fraction:.4f}")
        return "\n".join(lines)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        report = cls()
        for entry in data.get("frames", []):
            report.add(
                entry["frame"],
                entry["psnr_db"],
                entry["ssim"],
                entry.get("occlusion_fraction"),
            )
        return report
