"""Dataset ingestion, batch sampling, and the procedural synthetic face set.

The on-disk layout for a dataset root is::

    root/
      annotations.csv        # header: path,identity,AU01,...,AU45
      images/<path>          # lossless 8-bit RGB files, paths from the CSV

The synthetic renderer draws a parametric face whose geometry responds
smoothly to the AU vector, with all AU-driven changes confined to the face
region. Region bounding boxes are exported so tests and evaluation can
check edit locality against known ground truth.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import (
    AU_NAMES,
    DatasetError,
    ShapeError,
    clamp_au,
)

CSV_HEADER = ("path", "identity") + AU_NAMES


@dataclass(frozen=True)
class DatasetRecord:
    image: np.ndarray        # (H, W, 3) float32 in [-1, 1]
    au: np.ndarray           # (d,) float64 in [0, 5]
    identity: int            # dense index in [0, n)
    source_path: str


@dataclass(frozen=True)
class Batch:
    images: np.ndarray       # (B, H, W, 3) float32
    source_aus: np.ndarray   # (B, d) float64
    target_aus: np.ndarray   # (B, d) float64, cyclic shift of source_aus
    identities: np.ndarray   # (B,) int64


@dataclass(frozen=True)
class SyntheticFaceParams:
    """Identity-level appearance knobs; same params + same AUs => same image."""

    identity_seed: int
    skin_tone: float         # 0 light .. 1 dark
    face_aspect: float       # horizontal radius multiplier
    eye_spacing: float       # eye center |x| in normalized coords

    @classmethod
    def from_seed(cls, identity_seed: int) -> "SyntheticFaceParams":
        rng = np.random.default_rng(identity_seed)
        return cls(
            identity_seed=identity_seed,
            skin_tone=float(0.10 + 0.75 * rng.random()),
            face_aspect=float(0.88 + 0.24 * rng.random()),
            eye_spacing=float(0.23 + 0.09 * rng.random()),
        )


# ---------------------------------------------------------------------------
# image helpers

def image_to_uint8(image: np.ndarray) -> np.ndarray:
    """Map a [-1, 1] float image to 8-bit RGB."""
    arr = np.asarray(image, dtype=np.float64)
    return np.clip(np.round((arr + 1.0) * 0.5 * 255.0), 0, 255).astype(np.uint8)


def save_image_png(image: np.ndarray, path) -> None:
    Image.fromarray(image_to_uint8(image), mode="RGB").save(path, format="PNG")


def load_image_bytes(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im)


def preprocess(raw: np.ndarray, image_size: int = 128) -> np.ndarray:
    """Center-crop a byte image to square, resize, and map to [-1, 1]."""
    arr = np.asarray(raw)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected a 3-channel image, got shape {arr.shape}")
    h, w = arr.shape[:2]
    if h < 8 or w < 8:
        raise ShapeError(f"image too small to preprocess: {h}x{w}")
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    arr = arr[top:top + side, left:left + side]
    if side != image_size:
        im = Image.fromarray(arr.astype(np.uint8), mode="RGB")
        im = im.resize((image_size, image_size), Image.BILINEAR)
        arr = np.asarray(im)
    return (arr.astype(np.float32) / 255.0) * 2.0 - 1.0


# ---------------------------------------------------------------------------
# ingestion

def load_dataset(root, image_size: int = 128) -> list[DatasetRecord]:
    """Read every record of an annotated dataset directory.

    Identities are mapped to dense indices in first-appearance order.
    Intensities are clamped into [0, 5]; malformed rows raise DatasetError
    naming the row.
    """
    root = Path(root)
    csv_path = root / "annotations.csv"
    images_dir = root / "images"
    if not csv_path.is_file():
        raise DatasetError(f"annotations CSV not found: {csv_path}")

    records: list[DatasetRecord] = []
    identity_index: dict[str, int] = {}
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise DatasetError(
                f"unexpected CSV header in {csv_path}; expected "
                f"{','.join(CSV_HEADER)}")
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DatasetError(
                    f"row {row_no}: expected {len(AU_NAMES)} AU columns "
                    f"({len(CSV_HEADER)} fields total), got {len(row)} fields")
            rel_path, identity = row[0], row[1]
            try:
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DatasetError(f"row {row_no}: non-numeric AU intensity "
                                   f"({exc})") from None
            img_path = images_dir / rel_path
            if not img_path.is_file():
                raise DatasetError(f"row {row_no}: image file missing: {img_path}")
            image = preprocess(load_image_bytes(img_path), image_size)
            if identity not in identity_index:
                identity_index[identity] = len(identity_index)
            records.append(DatasetRecord(
                image=image,
                au=clamp_au(values),
                identity=identity_index[identity],
                source_path=rel_path,
            ))
    return records


def sample_batch(records: list[DatasetRecord], batch_size: int,
                 rng: np.random.Generator) -> Batch:
    """Draw a batch without replacement; targets are a cyclic shift of sources.

    The shift keeps target AU vectors on the empirical label distribution
    while guaranteeing no sample is asked to reproduce its own label slot.
    """
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    if len(records) < batch_size:
        raise DatasetError(
            f"dataset has {len(records)} records, need at least {batch_size}")
    idx = rng.choice(len(records), size=batch_size, replace=False)
    images = np.stack([records[i].image for i in idx]).astype(np.float32)
    source_aus = np.stack([records[i].au for i in idx])
    identities = np.asarray([records[i].identity for i in idx], dtype=np.int64)
    shift = int(rng.integers(1, batch_size))
    target_aus = np.roll(source_aus, -shift, axis=0)
    return Batch(images=images, source_aus=source_aus,
                 target_aus=target_aus, identities=identities)


# ---------------------------------------------------------------------------
# synthetic renderer

def region_boxes(image_size: int = 128) -> dict[str, tuple[int, int, int, int]]:
    """Pixel boxes (row0, row1, col0, col1) for the renderer's face regions.

    ``background`` is a top-left patch that no AU or identity parameter
    ever touches; the remaining boxes bound where the named AW groups act.
    """
    def box(y0, y1, x0, x1):
        half = (image_size - 1) / 2.0
        r0 = int(np.floor((y0 + 1.0) * half))
        r1 = int(np.ceil((y1 + 1.0) * half)) + 1
        c0 = int(np.floor((x0 + 1.0) * half))
        c1 = int(np.ceil((x1 + 1.0) * half)) + 1
        clip = lambda v: max(0, min(image_size, v))
        return (clip(r0), clip(r1), clip(c0), clip(c1))

    bg = max(8, image_size // 8)
    return {
        "mouth": box(0.20, 0.70, -0.48, 0.48),
        "eyes": box(-0.34, -0.06, -0.52, 0.52),
        "brows": box(-0.60, -0.26, -0.55, 0.55),
        "background": (0, bg, 0, bg),
    }


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _soft_inside(q: np.ndarray, width: float) -> np.ndarray:
    """1 well inside q<1, 0 well outside, smooth across the boundary."""
    return _smoothstep((1.0 + width - q) / (2.0 * width))


def _blob(xx, yy, cx, cy, sx, sy=None) -> np.ndarray:
    sy = sx if sy is None else sy
    return np.exp(-(((xx - cx) / sx) ** 2 + ((yy - cy) / sy) ** 2))


def render_synthetic_face(params: SyntheticFaceParams, u,
                          image_size: int = 128) -> np.ndarray:
    """Rasterize one face for the given identity params and AU intensities.

    Geometry mapping (intensities normalized to [0, 1] internally):
    mouth corners follow AU12/AU15, mouth opening AU25/AU26, brows
    AU01/AU02/AU04, eye aperture AU05/AU45, cheek shading AU06. The
    remaining AUs drive fixed local shading patches so that no AU is a
    no-op. Everything is a smooth function of u and bit-deterministic.
    """
    u = clamp_au(u)
    a = u / 5.0  # normalized per-AU drive
    (au1, au2, au4, au5, au6, au7, au9, au10, au12,
     au14, au15, au17, au20, au23, au25, au26, au45) = a

    s = image_size
    coord = np.linspace(-1.0, 1.0, s)
    xx, yy = np.meshgrid(coord, coord)  # yy grows downward

    # backdrop: fixed vertical gradient, independent of identity and AUs
    img = np.empty((s, s, 3), dtype=np.float64)
    back = 0.10 + 0.08 * (yy + 1.0) * 0.5
    img[..., 0] = back * 0.9
    img[..., 1] = back * 0.95
    img[..., 2] = back * 1.1

    # head
    rx = 0.56 * params.face_aspect
    ry = 0.72
    face_q = (xx / rx) ** 2 + ((yy - 0.05) / ry) ** 2
    face = _soft_inside(face_q, 0.08)

    light = np.array([0.93, 0.77, 0.65])
    dark = np.array([0.46, 0.31, 0.23])
    skin = light + (dark - light) * params.skin_tone
    shade = 1.0 - 0.25 * _smoothstep((face_q - 0.45) / 0.55)  # rim darkening

    # shading AUs (kept inside the face mask)
    shade = shade + 0.20 * au6 * (_blob(xx, yy, -0.32, 0.16, 0.14) +
                                  _blob(xx, yy, 0.32, 0.16, 0.14))
    shade = shade - 0.16 * au7 * (_blob(xx, yy, -params.eye_spacing, -0.09, 0.10, 0.045) +
                                  _blob(xx, yy, params.eye_spacing, -0.09, 0.10, 0.045))
    shade = shade - 0.18 * au9 * _blob(xx, yy, 0.0, -0.06, 0.07, 0.10)
    shade = shade + 0.14 * au10 * _blob(xx, yy, 0.0, 0.30, 0.16, 0.05)
    shade = shade + 0.15 * au17 * _blob(xx, yy, 0.0, 0.64, 0.12, 0.07)

    base = skin[None, None, :] * shade[..., None]

    # nose hint
    nose = _blob(xx, yy, 0.0, 0.16, 0.035, 0.12)
    base = base * (1.0 - 0.12 * nose[..., None])

    # eyes
    aperture = (0.050 * (1.0 + 0.55 * au5) * (1.0 - 0.94 * au45)) + 0.004
    sclera_col = np.array([0.93, 0.93, 0.91])
    iris_col = np.array([0.12, 0.09, 0.08])
    for sign in (-1.0, 1.0):
        ex = sign * params.eye_spacing
        eye_q = ((xx - ex) / 0.085) ** 2 + ((yy + 0.18) / aperture) ** 2
        eye_m = _soft_inside(eye_q, 0.25)
        base = base * (1.0 - eye_m[..., None]) + sclera_col * eye_m[..., None]
        iris_q = ((xx - ex) / 0.032) ** 2 + ((yy + 0.18) / 0.032) ** 2
        iris_m = np.minimum(_soft_inside(iris_q, 0.35), eye_m)
        base = base * (1.0 - iris_m[..., None]) + iris_col * iris_m[..., None]

    # brows: soft bands whose inner/outer heights ride the brow AUs
    brow_col = np.array([0.17, 0.12, 0.09])
    x_in, x_out = 0.10, 0.38
    inner_y = -0.36 - 0.09 * au1 + 0.09 * au4
    outer_y = -0.38 - 0.09 * au2 + 0.05 * au4
    for sign in (-1.0, 1.0):
        t = np.clip((sign * xx - x_in) / (x_out - x_in), 0.0, 1.0)
        y_line = inner_y + (outer_y - inner_y) * t
        span = _smoothstep((sign * xx - (x_in - 0.03)) / 0.06) * \
            _smoothstep(((x_out + 0.03) - sign * xx) / 0.06)
        band = np.exp(-((yy - y_line) / 0.030) ** 2) * span
        base = base * (1.0 - 0.9 * band[..., None]) + \
            brow_col * (0.9 * band[..., None])

    # mouth: curved lip band with an AU-driven opening
    lip_col = np.array([0.60, 0.24, 0.26])
    inner_col = np.array([0.07, 0.03, 0.04])
    y_m = 0.42 + 0.035 * au26
    w_m = 0.26 * (1.0 + 0.35 * au20)
    lift = 0.11 * au12 - 0.09 * au15
    opening = 0.015 + 0.20 * (0.6 * au25 + 0.4 * au26)
    lip_thick = 0.042 * (1.0 - 0.45 * au23)

    xr = xx / w_m
    y_curve = y_m - lift * xr ** 2
    span = _smoothstep((1.1 - np.abs(xr)) / 0.2)
    dy = np.abs(yy - y_curve)
    lip_band = _smoothstep((lip_thick + opening / 2.0 - dy) / 0.02) * span
    lip_shade = 1.0 - 0.45 * au23
    base = base * (1.0 - lip_band[..., None]) + \
        (lip_col * lip_shade)[None, None, :] * lip_band[..., None]
    interior = _smoothstep((opening / 2.0 - dy) / 0.015) * \
        _smoothstep((0.92 - np.abs(xr)) / 0.15)
    base = base * (1.0 - interior[..., None]) + inner_col * interior[..., None]

    # dimples last so they sit on top of the mouth corners
    dimple = au14 * (_blob(xx, yy, -w_m, y_m - lift, 0.05) +
                     _blob(xx, yy, w_m, y_m - lift, 0.05))
    base = base * (1.0 - 0.25 * dimple[..., None])

    img = img * (1.0 - face[..., None]) + base * face[..., None]
    return np.clip(img * 2.0 - 1.0, -1.0, 1.0).astype(np.float32)


def make_synthetic_dataset(n_identities: int, samples_per_identity: int,
                           seed: int, out_dir,
                           image_size: int = 128) -> list[DatasetRecord]:
    """Render and write a synthetic dataset in the ingestion layout.

    Per-entry AU sampling is a mixture of exact zero (p=0.5) and
    Uniform[0, 5]; intensities in the CSV carry 4 fractional digits and the
    rendered images use exactly those rounded values, so a reload
    reproduces the records up to PNG quantization.
    """
    if n_identities < 2:
        raise ValueError(f"n_identities must be >= 2, got {n_identities}")
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    os.makedirs(images_dir, exist_ok=True)

    rng = np.random.default_rng(seed)
    records: list[DatasetRecord] = []
    rows: list[list[str]] = []
    for ident in range(n_identities):
        params = SyntheticFaceParams.from_seed(int(rng.integers(0, 2 ** 31 - 1)))
        for j in range(samples_per_identity):
            values = rng.uniform(0.0, 5.0, size=len(AU_NAMES))
            zero_mask = rng.random(len(AU_NAMES)) < 0.5
            au = np.round(np.where(zero_mask, 0.0, values), 4)
            image = render_synthetic_face(params, au, image_size)
            rel_path = f"id{ident:03d}_{j:04d}.png"
            save_image_png(image, images_dir / rel_path)
            rows.append([rel_path, f"id{ident:03d}"] +
                        [f"{v:.4f}" for v in au])
            records.append(DatasetRecord(image=image, au=au, identity=ident,
                                         source_path=rel_path))

    with open(out_dir / "annotations.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)
    return records
