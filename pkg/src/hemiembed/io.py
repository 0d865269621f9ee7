"""File formats: PFM/PGM images, image-stack directories and JSON sidecars."""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .render import ImageStack

LUMA = np.array([0.299, 0.587, 0.114])


def write_pfm(path, image: np.ndarray) -> None:
    """Little-endian PFM; ``(H, W)`` arrays become ``Pf``, ``(H, W, 3)`` become ``PF``.

    PFM stores rows bottom to top, so the array is flipped on the way out.
    """
    a = np.asarray(image, dtype="<f4")
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError("PFM images must be (H, W) or (H, W, 3)")
    h, w = a.shape[:2]
    with open(path, "wb") as fh:
        fh.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        fh.write(np.ascontiguousarray(a[::-1]).tobytes())


def _header_tokens(fh, count):
    tokens = []
    while len(tokens) < count:
        line = fh.readline()
        if not line:
            raise ValueError("truncated header")
        line = line.split(b"#")[0]
        tokens += line.split()
    return tokens


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        tag, w, h, scale = _header_tokens(fh, 4)
        if tag not in (b"Pf", b"PF"):
            raise ValueError(f"{path}: not a PFM file")
        w, h, scale = int(w), int(h), float(scale)
        dtype = "<f4" if scale < 0 else ">f4"
        ch = 3 if tag == b"PF" else 1
        data = np.frombuffer(fh.read(w * h * ch * 4), dtype=dtype)
    if data.size != w * h * ch:
        raise ValueError(f"{path}: truncated pixel data")
    shape = (h, w, 3) if ch == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(float)


def read_pgm(path) -> np.ndarray:
    """Binary PGM (``P5``), 8 or 16 bit, scaled to ``[0, 1]``."""
    with open(path, "rb") as fh:
        tag, w, h, maxval = _header_tokens(fh, 4)
        if tag != b"P5":
            raise ValueError(f"{path}: only binary PGM (P5) is supported")
        w, h, maxval = int(w), int(h), int(maxval)
        dtype = np.uint8 if maxval < 256 else ">u2"
        data = np.frombuffer(fh.read(), dtype=dtype)[: w * h]
    if data.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(float) / maxval


def read_image(path) -> np.ndarray:
    """Grayscale image from PFM or PGM; color PFMs are converted to luma
    with Rec. 601 weights."""
    path = Path(path)
    img = read_pgm(path) if path.suffix.lower() == ".pgm" else read_pfm(path)
    if img.ndim == 3:
        img = img @ LUMA
    return img


def write_lights(path, lights: np.ndarray) -> None:
    np.savetxt(path, np.asarray(lights), delimiter=",", fmt="%.17g")


def read_lights(path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or re.match(r"^[A-Za-z]", line):
            continue
        rows.append([float(v) for v in line.split(",")])
    return np.array(rows).reshape(-1, 3)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


IMAGE_GLOBS = ("img_*.pfm", "img_*.pgm")


def write_stack(directory, stack: ImageStack, scene=None, info: dict | None = None) -> Path:
    """Write ``img_000.pfm``..., ``mask.pfm``, ``lights.csv`` and ``scene.json``;
    ground truth (if a scene is given) goes to ``normals_true.pfm`` and
    ``depth_true.pfm``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(stack.count - 1)))
    for i, img in enumerate(stack.images):
        write_pfm(d / f"img_{i:0{width}d}.pfm", img)
    write_pfm(d / "mask.pfm", stack.mask.astype(float))
    if stack.lights is not None:
        write_lights(d / "lights.csv", stack.lights)
    meta = {"height": stack.mask.shape[0], "width": stack.mask.shape[1],
            "images": stack.count, **stack.meta, **(info or {})}
    if scene is not None:
        write_pfm(d / "normals_true.pfm", scene.normals)
        if scene.depth is not None:
            write_pfm(d / "depth_true.pfm", scene.depth)
        meta["radius"] = scene.radius
    write_json(d / "scene.json", meta)
    return d


def read_stack(directory) -> ImageStack:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d} is not a directory")
    files = sorted(f for g in IMAGE_GLOBS for f in d.glob(g))
    if not files:
        raise FileNotFoundError(f"no img_*.pfm / img_*.pgm files in {d}")
    images = np.stack([read_image(f) for f in files])
    mask_file = d / "mask.pfm"
    mask = read_pfm(mask_file) > 0.5 if mask_file.exists() else images.max(axis=0) > 0
    images[:, ~mask] = 0.0
    lights = read_lights(d / "lights.csv") if (d / "lights.csv").exists() else None
    meta = json.loads((d / "scene.json").read_text()) if (d / "scene.json").exists() else {}
    return ImageStack(images=images, mask=mask, lights=lights, meta=meta)


def read_truth(directory):
    """``(normals, depth)`` ground truth if present, else ``None`` entries."""
    d = Path(directory)
    n = read_pfm(d / "normals_true.pfm") if (d / "normals_true.pfm").exists() else None
    z = read_pfm(d / "depth_true.pfm") if (d / "depth_true.pfm").exists() else None
    return n, z
