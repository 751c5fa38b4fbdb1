"""Synthetic speckle images with a chosen contrast and grain size.

A circular complex Gaussian field is (optionally) smoothed with a Gaussian
kernel of standard deviation ``grain_radius``, its squared modulus is
rescaled to unit mean, giving an exponential intensity ``X`` with unit
standard deviation, and the observed image is mixed as

    I = mu * (1 - w) + mu * w * X

so that sd(I) / mean(I) = w before quantisation.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import SpeckleLabError, ValidationError
from .image_core import as_gray, load_gray, save_gray

__all__ = [
    "SpeckleParams",
    "SpeckleStats",
    "LabeledImage",
    "PRESET3",
    "measure_contrast",
    "render_speckle",
    "generate_speckle",
    "make_corpus",
    "preset_classes",
    "write_corpus",
    "read_corpus",
]

CLIP_WARN_FRACTION = 0.05


@dataclass(frozen=True)
class SpeckleParams:
    width: int = 256
    height: int = 256
    target_contrast: float = 1.0
    grain_radius: float = 0.0
    mean_level: float = 32.0
    seed: int | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError("width and height must be >= 1")
        if not 0 <= self.target_contrast <= 1:
            raise ValidationError("target_contrast must lie in [0, 1]")
        if self.grain_radius < 0:
            raise ValidationError("grain_radius must be >= 0")
        if not 0 < self.mean_level < 255:
            raise ValidationError("mean_level must lie in (0, 255)")


@dataclass(frozen=True)
class SpeckleStats:
    sigma: float
    mean_intensity: float
    contrast: float


def measure_contrast(img) -> SpeckleStats:
    """Speckle contrast: population std over mean, across the whole image."""
    a = as_gray(img).astype(float)
    m = a.mean()
    if m <= 0:
        raise SpeckleLabError("zero mean intensity: contrast is undefined")
    s = a.std()
    return SpeckleStats(sigma=float(s), mean_intensity=float(m), contrast=float(s / m))


def _unit_exponential(shape, grain_radius, rng) -> np.ndarray:
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    if grain_radius > 0:
        re = gaussian_filter(re, grain_radius, mode="wrap")
        im = gaussian_filter(im, grain_radius, mode="wrap")
    x = re * re + im * im
    return x / x.mean()


def render_speckle(p: SpeckleParams, rng=None) -> tuple[np.ndarray, float]:
    """Return ``(image, clip_fraction)``."""
    rng = np.random.default_rng(p.seed) if rng is None else rng
    mu, w = p.mean_level, p.target_contrast
    if w == 0:
        return np.full((p.height, p.width), int(np.floor(mu + 0.5)), dtype=np.uint8), 0.0
    x = _unit_exponential((p.height, p.width), p.grain_radius, rng)
    intensity = mu * (1.0 - w) + mu * w * x
    q = np.floor(intensity + 0.5)
    clip = float(np.mean(q > 255))
    return np.clip(q, 0, 255).astype(np.uint8), clip


def generate_speckle(p: SpeckleParams, rng=None) -> np.ndarray:
    return render_speckle(p, rng)[0]


# (target_contrast, grain_radius) per class, labels 1..3
PRESET3 = ((0.9, 1.0), (0.7, 2.0), (0.5, 4.0))


def preset_classes(name: str = "preset3", width: int = 256, height: int = 256, mean_level: float = 32.0):
    if name != "preset3":
        raise ValidationError(f"unknown class preset {name!r}")
    return [
        SpeckleParams(width=width, height=height, target_contrast=w, grain_radius=r, mean_level=mean_level)
        for w, r in PRESET3
    ]


@dataclass(frozen=True)
class LabeledImage:
    image_id: str
    label: int
    pixels: np.ndarray
    params: SpeckleParams | None = None
    measured_contrast: float | None = None
    clip_fraction: float | None = None
    file: str | None = None


def make_corpus(classes, images_per_class: int, seed: int = 0) -> list[LabeledImage]:
    """Seeded labelled corpus; image ``i`` uses the RNG stream ``(seed, i)``."""
    if len(classes) < 2:
        raise ValidationError("need at least two classes")
    if images_per_class < 4:
        raise ValidationError("images_per_class must be >= 4")
    out = []
    index = 0
    for label, base in enumerate(classes, start=1):
        for j in range(images_per_class):
            params = SpeckleParams(**{**asdict(base), "seed": None})
            img, clip = render_speckle(params, np.random.default_rng([seed, index]))
            c = measure_contrast(img).contrast if img.mean() > 0 else 0.0
            out.append(LabeledImage(
                image_id=f"c{label}_{j:03d}", label=label, pixels=img, params=params,
                measured_contrast=c, clip_fraction=clip,
            ))
            index += 1
    return out


def write_corpus(corpus, out_dir, seed=None) -> dict:
    """Write each image as PGM plus ``manifest.json``; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    entries, warnings = [], []
    for item in corpus:
        fname = f"{item.image_id}.pgm"
        save_gray(item.pixels, os.path.join(out_dir, fname))
        entry = {"file": fname, "image_id": item.image_id, "class": item.label}
        if item.params is not None:
            entry["params"] = {k: v for k, v in asdict(item.params).items() if k != "seed"}
        if item.measured_contrast is not None:
            entry["measured_contrast"] = item.measured_contrast
        if item.clip_fraction is not None:
            entry["clip_fraction"] = item.clip_fraction
            if item.clip_fraction > CLIP_WARN_FRACTION:
                warnings.append(f"{item.image_id}: clip fraction {item.clip_fraction:.4f} exceeds {CLIP_WARN_FRACTION}")
        entries.append(entry)
    manifest = {"seed": seed, "images": entries, "warnings": warnings}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_corpus(directory) -> list[LabeledImage]:
    path = os.path.join(directory, "manifest.json")
    if not os.path.isfile(path):
        raise ValidationError(f"corpus manifest not found: {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    out = []
    for e in manifest["images"]:
        params = SpeckleParams(**e["params"]) if "params" in e else None
        out.append(LabeledImage(
            image_id=e.get("image_id", os.path.splitext(e["file"])[0]), label=int(e["class"]),
            pixels=load_gray(os.path.join(directory, e["file"])), params=params,
            measured_contrast=e.get("measured_contrast"), clip_fraction=e.get("clip_fraction"),
            file=e["file"],
        ))
    return out
