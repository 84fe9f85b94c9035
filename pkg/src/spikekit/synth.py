"""Synthetic four-class motion dataset: desk-scale stand-in for a real
spike-camera action corpus.

Each clip renders one or two bright Gaussian blobs over a dark background,
following a class-specific motion archetype with per-clip seeded jitter:

* clap:  two blobs repeatedly converging toward the midline and parting
* wave:  one blob oscillating horizontally (several velocity reversals)
* punch: fast horizontal thrusts with a slow recoil
* throw: a single rising-then-falling arc across the frame

Clips are written as directories of numbered 8-bit PGM frames plus a
``prompts.txt`` (one class prompt per line, line index = label) and a
``manifest.json`` listing every clip with its label.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .camera import IntensityVideo
from .errors import PreconditionError
from .videoio import write_pgm_clip

CLASS_PROMPTS = {
    "clap": "a person clapping hands together",
    "wave": "a person waving one hand",
    "punch": "a person punching forward",
    "throw": "a person throwing an object",
}


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    classes: tuple[str, ...] = ("clap", "wave", "punch", "throw")
    clips_per_class: int = 12
    frames: int = 250
    height: int = 64
    width: int = 64
    seed: int = 0

    def __post_init__(self):
        if len(self.classes) < 2:
            raise PreconditionError(
                "need at least 2 classes for contrastive evaluation")
        unknown = [c for c in self.classes if c not in CLASS_PROMPTS]
        if unknown:
            raise PreconditionError(
                f"unknown class archetypes {unknown}; known: "
                f"{sorted(CLASS_PROMPTS)}")
        if self.clips_per_class < 1:
            raise PreconditionError("clips_per_class must be >= 1")
        if self.frames < 2:
            raise PreconditionError("clips need at least 2 frames")
        if self.height < 64 or self.width < 64:
            raise PreconditionError(
                "resolution must be at least 64x64 (backbone reduces by 32x)")


def _blob(grid_y, grid_x, cy, cx, sigma, amp):
    return amp * np.exp(-((grid_y - cy) ** 2 + (grid_x - cx) ** 2)
                        / (2.0 * sigma ** 2))


def render_clip(class_name: str, frames: int, height: int, width: int,
                rng: np.random.Generator) -> IntensityVideo:
    """Render one clip of the given archetype with seeded jitter."""
    if class_name not in CLASS_PROMPTS:
        raise PreconditionError(f"unknown class {class_name!r}")
    gy, gx = np.mgrid[0:height, 0:width].astype(np.float64)
    background = 0.05
    sigma = (min(height, width) / 12.0) * rng.uniform(0.85, 1.15)
    amp = rng.uniform(0.8, 1.0)
    cy = height * rng.uniform(0.42, 0.58)
    cx = width * rng.uniform(0.45, 0.55)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    freq = rng.uniform(1.8, 2.4) if class_name == "clap" else \
        rng.uniform(2.2, 3.0)
    strikes = int(rng.integers(2, 4))

    out = np.empty((frames, height, width), dtype=np.float64)
    for t in range(frames):
        s = t / (frames - 1)
        frame = np.full((height, width), background)
        if class_name == "clap":
            gap = 0.30 * width * abs(math.cos(math.pi * freq * s + phase))
            frame += _blob(gy, gx, cy, cx - gap - 2, sigma, amp)
            frame += _blob(gy, gx, cy, cx + gap + 2, sigma, amp)
        elif class_name == "wave":
            x = cx + 0.32 * width * math.sin(2.0 * math.pi * freq * s + phase)
            frame += _blob(gy, gx, cy * 0.7, x, sigma, amp)
            frame += _blob(gy, gx, height * 0.8, cx, sigma * 1.4, amp * 0.5)
        elif class_name == "punch":
            phase_s = (s * strikes) % 1.0
            reach = min(1.0, phase_s / 0.25) if phase_s < 0.25 else \
                max(0.0, 1.0 - (phase_s - 0.25) / 0.75)
            x = 0.2 * width + 0.6 * width * reach
            frame += _blob(gy, gx, cy, x, sigma, amp)
            frame += _blob(gy, gx, cy, 0.15 * width, sigma * 1.3, amp * 0.5)
        else:  # throw
            x = 0.15 * width + 0.7 * width * s
            y = cy - 0.35 * height * 4.0 * s * (1.0 - s)
            frame += _blob(gy, gx, y, x, sigma * 0.8, amp)
            frame += _blob(gy, gx, height * 0.75, 0.2 * width,
                           sigma * 1.3, amp * 0.5)
        out[t] = np.clip(frame, 0.0, 1.0)
    return IntensityVideo(out)


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

def synth_dataset(spec: SyntheticDatasetSpec, out_dir) -> dict:
    """Render the dataset to disk; returns the manifest dict.

    Layout: ``clips/<class>_<idx>/frame_*.pgm``, ``prompts.txt`` with one
    prompt per class (line index = label), ``manifest.json``. Clip seeds
    derive from (spec.seed, class index, clip index), so regenerating with
    the same spec is bit-identical.
    """
    clips_root = os.path.join(out_dir, "clips")
    os.makedirs(clips_root, exist_ok=True)
    manifest = {"classes": list(spec.classes),
                "frames": spec.frames,
                "height": spec.height, "width": spec.width,
                "seed": spec.seed, "clips": []}
    for label, class_name in enumerate(spec.classes):
        for idx in range(spec.clips_per_class):
            rng = np.random.default_rng([spec.seed, label, idx])
            video = render_clip(class_name, spec.frames, spec.height,
                                spec.width, rng)
            name = f"{class_name}_{idx:03d}"
            write_pgm_clip(video, os.path.join(clips_root, name))
            manifest["clips"].append({"name": name,
                                      "path": f"clips/{name}",
                                      "class": class_name, "label": label})
    with open(os.path.join(out_dir, "prompts.txt"), "w",
              encoding="utf-8") as fh:
        for class_name in spec.classes:
            fh.write(CLASS_PROMPTS[class_name] + "\n")
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def brightness_centroid(frame: np.ndarray) -> tuple[float, float]:
    """Intensity-weighted (y, x) centroid of one frame."""
    total = frame.sum()
    if total <= 0:
        raise PreconditionError("frame has no brightness")
    gy, gx = np.mgrid[0:frame.shape[0], 0:frame.shape[1]]
    return float((gy * frame).sum() / total), float((gx * frame).sum() / total)
