"""
On-disk datasets.

A dataset root holds one directory per split:

    <root>/<split>/manifest.txt     image ids, one per line
    <root>/<split>/images/<id>.png  (or .ppm)
    <root>/<split>/labels/<id>.txt  lines `class cx cy w h [pcx pcy]`, normalized
    <root>/<split>/masks/<id>.png   optional 16-bit instance map

The picking point (pcx, pcy) is written for ripe fruit only.
"""
import glob
import json
import logging
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image

from augment.geometric import letterbox, letterbox_annotations
from augment.utils.imaging import from_uint8, to_uint8
from utils.errors import DataError
from utils.sample import CLASS_NAMES, RIPE, Annotation, Sample

logger = logging.getLogger(__name__)

IMAGE_FORMATS = ("png", "ppm")
MANIFEST = "manifest.txt"


# ---------------------------------------------------------------- labels

def format_label(ann: Annotation) -> str:
    x1, y1, x2, y2 = ann.box
    values = [(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1]
    if ann.center is not None:
        values += list(ann.center)
    return " ".join([str(ann.class_id)] + [f"{v:.6f}" for v in values])


def parse_label(line: str, where: str = "label") -> Annotation:
    """
    Parse one label line.

    Raises:
        DataError: On a wrong field count, an unknown class, a degenerate box
            or a picking point on an unripe fruit
    """
    parts = line.split()
    if len(parts) not in (5, 7):
        raise DataError(f"{where}: expected 5 or 7 fields, got {len(parts)}")
    try:
        class_id = int(parts[0])
        values = [float(v) for v in parts[1:]]
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from exc
    if not 0 <= class_id < len(CLASS_NAMES):
        raise DataError(f"{where}: unknown class {class_id}")
    cx, cy, w, h = values[:4]
    if w <= 0 or h <= 0:
        raise DataError(f"{where}: box has no area")
    center = None
    if len(values) == 6:
        if class_id != RIPE:
            raise DataError(f"{where}: picking point given for a {CLASS_NAMES[class_id]} fruit")
        center = (values[4], values[5])
    return Annotation(class_id, (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), center)


def read_labels(path: str) -> List[Annotation]:
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read labels {path}: {exc}") from exc
    return [parse_label(line, f"{path}:{n + 1}") for n, line in enumerate(lines) if line.strip()]


def write_labels(path: str, anns: Sequence[Annotation]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ann in anns:
            f.write(format_label(ann) + "\n")


# ---------------------------------------------------------------- images

def read_image(path: str) -> np.ndarray:
    """H×W×3 float image in [0, 1]."""
    try:
        with Image.open(path) as img:
            return from_uint8(np.asarray(img.convert("RGB")))
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def write_image(path: str, image: np.ndarray) -> None:
    Image.fromarray(to_uint8(image)).save(path)


def find_image(directory: str, image_id: str) -> str:
    for ext in IMAGE_FORMATS:
        path = os.path.join(directory, f"{image_id}.{ext}")
        if os.path.exists(path):
            return path
    raise DataError(f"no image for {image_id} in {directory}")


def list_images(path: str) -> List[str]:
    """A single image file, or every supported image in a directory, sorted."""
    if os.path.isfile(path):
        return [path]
    if not os.path.isdir(path):
        raise DataError(f"no such image file or directory: {path}")
    found = sorted(p for ext in IMAGE_FORMATS for p in glob.glob(os.path.join(path, f"*.{ext}")))
    if not found:
        raise DataError(f"no .png or .ppm images in {path}")
    return found


def fit_image(image: np.ndarray, size: int, anns: Sequence[Annotation] = ()):
    """Letterbox an image (and its labels) to `size` unless it already is size×size."""
    if image.shape[:2] == (size, size):
        return image, list(anns)
    canvas, r, pad = letterbox(image, size)
    return canvas, letterbox_annotations(anns, image.shape[:2], r, pad, size)


# ---------------------------------------------------------------- datasets

def split_dir(root: str, split: str) -> str:
    return os.path.join(root, split)


def write_split(root: str, split: str, samples: Sequence[Sample], image_format: str = "png") -> str:
    """
    Write samples as one split of a dataset.

    Returns:
        The split directory
    """
    if image_format not in IMAGE_FORMATS:
        raise DataError(f"image format must be one of {IMAGE_FORMATS}, got {image_format!r}")
    directory = split_dir(root, split)
    for sub in ("images", "labels", "masks"):
        os.makedirs(os.path.join(directory, sub), exist_ok=True)
    for sample in samples:
        write_image(os.path.join(directory, "images", f"{sample.image_id}.{image_format}"), sample.image)
        write_labels(os.path.join(directory, "labels", f"{sample.image_id}.txt"), sample.annotations)
        if sample.instance_map is not None:
            Image.fromarray(sample.instance_map.astype(np.uint16)).save(
                os.path.join(directory, "masks", f"{sample.image_id}.png"))
    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8", newline="\n") as f:
        f.write("".join(f"{s.image_id}\n" for s in samples))
    logger.debug("wrote %d samples to %s", len(samples), directory)
    return directory


def read_manifest(directory: str) -> List[str]:
    path = os.path.join(directory, MANIFEST)
    try:
        with open(path, encoding="utf-8") as f:
            return [line.strip() for line in f if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc


def load_split(root: str, split: str, size: Optional[int] = None, required: bool = True) -> List[Sample]:
    """
    Load one split.

    Args:
        root: Dataset root
        split: Split name
        size: Square input extent; images of another shape are letterboxed.
            Defaults to the extent of the first image, which must be square.
        required: When false a missing or empty split loads as no samples

    Returns:
        Samples in manifest order
    """
    directory = split_dir(root, split)
    if not required and not os.path.exists(os.path.join(directory, MANIFEST)):
        return []
    samples = []
    for image_id in read_manifest(directory):
        image = read_image(find_image(os.path.join(directory, "images"), image_id))
        anns = read_labels(os.path.join(directory, "labels", f"{image_id}.txt"))
        if size is None:
            if image.shape[0] != image.shape[1]:
                raise DataError(f"{image_id} is {image.shape[1]}x{image.shape[0]}; give an input size")
            size = image.shape[0]
        instance_map = None
        mask_path = os.path.join(directory, "masks", f"{image_id}.png")
        if image.shape[:2] == (size, size) and os.path.exists(mask_path):
            with Image.open(mask_path) as mask:
                instance_map = np.asarray(mask, dtype=np.int32)
        image, anns = fit_image(image, size, anns)
        samples.append(Sample(image_id, image, anns, instance_map))
    if not samples and required:
        raise DataError(f"split {split} of {root} is empty")
    logger.info("loaded %d images from %s", len(samples), directory)
    return samples


def write_dataset_info(root: str, info: Dict[str, object]) -> None:
    with open(os.path.join(root, "dataset.json"), "w", encoding="utf-8") as f:
        json.dump(info, f, indent=2)
