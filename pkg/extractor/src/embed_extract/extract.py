"""Offline feature extraction: class-per-subfolder image tree -> EMB1 files.

Labels follow the byte order of subfolder names; sample ids are assigned from
the manifest order and stay identical across passes, so multi-pass dumps can
be joined downstream for score averaging.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .emb1 import write_emb1
from .models import load_encoder, model_spec


@dataclass
class ExtractJob:
    model: str
    images: str | Path
    out: str | Path
    batch_size: int = 16
    device: str = "cpu"
    passes: int = 1
    augment: bool = False     # random flip + crop per pass; default center crop
    seed: int = 0

    def validate(self) -> None:
        model_spec(self.model)
        if self.passes < 1:
            raise ValueError(f"passes must be >= 1, got {self.passes}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


def discover_images(root) -> tuple[list[str], list[tuple[int, int, Path]]]:
    """Sorted class subfolders and (id, label, path) rows in manifest order."""
    root = Path(root)
    classes = sorted(
        (p.name for p in root.iterdir() if p.is_dir()),
        key=lambda name: name.encode("utf-8"),
    )
    if len(classes) < 2:
        raise ValueError(f"{root}: need at least two class subfolders, found {len(classes)}")
    rows = []
    next_id = 0
    for label, cls in enumerate(classes):
        for path in sorted((root / cls).iterdir(), key=lambda p: p.name.encode("utf-8")):
            if path.suffix.lower() in IMAGE_SUFFIXES:
                rows.append((next_id, label, path))
                next_id += 1
    if not rows:
        raise ValueError(f"{root}: no images found")
    return classes, rows


def _load_image(path) -> Image.Image | None:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        warnings.warn(f"skipping undecodable image {path}: {exc}")
        return None


def _augmented(img: Image.Image, size: int, rng: np.random.Generator | None) -> Image.Image:
    w, h = img.size
    scale = size / min(w, h)
    img = img.resize((max(size, round(w * scale)), max(size, round(h * scale))))
    w, h = img.size
    if rng is None:
        left, top = (w - size) // 2, (h - size) // 2
    else:
        left = int(rng.integers(0, w - size + 1))
        top = int(rng.integers(0, h - size + 1))
        if rng.random() < 0.5:
            img = img.transpose(Image.FLIP_LEFT_RIGHT)
    return img.crop((left, top, left + size, top + size))


def pass_path(out, pass_index: int, passes: int) -> Path:
    out = Path(out)
    if passes == 1:
        return out
    return out.with_name(f"{out.stem}.pass{pass_index}{out.suffix}")


def extract(job: ExtractJob, encoder=None) -> dict:
    """Run the job and return the manifest (also written next to the output).

    encoder: optional callable list-of-PIL -> (B, width) array, used in place
    of loading the named pretrained model; its width must match the model's
    published width.
    """
    job.validate()
    spec = model_spec(job.model)
    if encoder is None:
        encoder, spec = load_encoder(job.model, job.device)
    classes, rows = discover_images(job.images)

    kept: list[tuple[int, int, Path]] = []
    skipped: list[str] = []
    images: list[Image.Image] = []
    for sample_id, label, path in rows:
        img = _load_image(path)
        if img is None:
            skipped.append(str(path.relative_to(job.images)))
        else:
            kept.append((sample_id, label, path))
            images.append(img)
    if not kept:
        raise ValueError("every image failed to decode")

    ids = np.array([row[0] for row in kept], dtype=np.uint64)
    labels = np.array([row[1] for row in kept], dtype=np.uint32)
    files = []
    for pass_index in range(job.passes):
        rng = (
            np.random.default_rng(np.random.SeedSequence(job.seed, spawn_key=(pass_index,)))
            if job.augment else None
        )
        prepared = [_augmented(img, spec.image_size, rng) for img in images]
        chunks = []
        for start in range(0, len(prepared), job.batch_size):
            chunks.append(np.asarray(encoder(prepared[start:start + job.batch_size])))
        features = np.concatenate(chunks, axis=0).astype(np.float32)
        if features.shape != (len(kept), spec.width):
            raise ValueError(
                f"encoder produced shape {features.shape}, expected ({len(kept)}, {spec.width})"
            )
        target = pass_path(job.out, pass_index, job.passes)
        write_emb1(target, features, labels, ids, num_classes=len(classes))
        files.append(str(target))

    manifest = {
        "model": spec.name,
        "width": spec.width,
        "layer": spec.layer,
        "source": spec.source,
        "preprocessing": ("random flip + random crop" if job.augment else "center crop")
                         + f" to {spec.image_size}x{spec.image_size}",
        "passes": job.passes,
        "classes": classes,
        "ids": {str(row[0]): str(row[2].relative_to(job.images)) for row in kept},
        "skipped": skipped,
        "files": files,
    }
    manifest_path = Path(str(job.out) + ".manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest
