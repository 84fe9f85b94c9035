"""Intensity-video file I/O.

Accepted input forms for a video: a directory of numbered 8-bit PGM (or
PNG-free grayscale) frames, a self-describing ``.npy`` array [T, H, W],
or a raw planar little-endian float32 file with a ``.meta.json`` sidecar
carrying ``t_len``/``height``/``width``.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .camera import IntensityVideo
from .errors import DataIOError


def write_pgm_frame(frame: np.ndarray, path) -> None:
    pixels = np.round(255.0 * np.clip(frame, 0.0, 1.0)).astype(np.uint8)
    header = f"P5\n{frame.shape[1]} {frame.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())


def write_pgm_clip(video: IntensityVideo, clip_dir) -> None:
    os.makedirs(clip_dir, exist_ok=True)
    for t in range(video.n_frames):
        write_pgm_frame(video.frames[t],
                        os.path.join(clip_dir, f"frame_{t:05d}.pgm"))


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM (or PPM, luma-converted) into a [0, 1]
    float frame."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataIOError(f"{path}: malformed PGM/PPM header")
        fields.append(data[start:pos])
    if fields[0] not in (b"P5", b"P6"):
        raise DataIOError(f"{path}: not a binary PGM/PPM file")
    channels = 3 if fields[0] == b"P6" else 1
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise DataIOError(f"{path}: only 8-bit PGM/PPM supported")
    pos += 1
    count = height * width * channels
    if len(data) - pos < count:
        raise DataIOError(f"{path}: truncated PGM/PPM body")
    body = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
    if channels == 3:
        from .camera import to_grayscale
        rgb = body.reshape(height, width, 3).astype(np.float64) / 255.0
        return to_grayscale(rgb)
    return body.reshape(height, width).astype(np.float64) / 255.0


def read_pgm_clip(clip_dir) -> IntensityVideo:
    names = sorted(n for n in os.listdir(clip_dir)
                   if n.endswith((".pgm", ".ppm")))
    if not names:
        raise DataIOError(f"{clip_dir}: no .pgm/.ppm frames found")
    frames = np.stack([read_pgm(os.path.join(clip_dir, n)) for n in names])
    return IntensityVideo(frames)


def write_video_raw(video: IntensityVideo, path) -> None:
    """Raw planar little-endian float32 body plus a .meta.json sidecar."""
    video.frames.astype("<f4").tofile(path)
    sidecar = os.fspath(path) + ".meta.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump({"t_len": video.n_frames, "height": video.height,
                   "width": video.width, "dtype": "f32"}, fh, indent=2)
        fh.write("\n")


def read_video_raw(path) -> IntensityVideo:
    sidecar = os.fspath(path) + ".meta.json"
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        flat = np.fromfile(path, dtype="<f4")
    except OSError as exc:
        raise DataIOError(f"cannot read raw video {path}: {exc}") from exc
    shape = (int(meta["t_len"]), int(meta["height"]), int(meta["width"]))
    if flat.size != shape[0] * shape[1] * shape[2]:
        raise DataIOError(
            f"{path}: {flat.size} values do not match sidecar shape {shape}")
    return IntensityVideo(flat.reshape(shape).astype(np.float64))


def load_video(path) -> IntensityVideo:
    """Dispatch on path form: frame directory, .npy tensor, or raw+sidecar."""
    path_str = os.fspath(path)
    if os.path.isdir(path_str):
        return read_pgm_clip(path_str)
    if path_str.endswith(".npy"):
        try:
            arr = np.load(path_str)
        except OSError as exc:
            raise DataIOError(f"cannot read {path_str}: {exc}") from exc
        if arr.ndim == 4 and arr.shape[3] == 3:
            from .camera import to_grayscale
            arr = np.stack([to_grayscale(f) for f in arr])
        return IntensityVideo(np.asarray(arr, dtype=np.float64))
    if os.path.exists(path_str + ".meta.json"):
        return read_video_raw(path_str)
    raise DataIOError(
        f"{path_str}: not a frame directory, .npy video, or raw file with "
        f".meta.json sidecar")
