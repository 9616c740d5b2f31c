"""On-disk artifacts: embedding containers, grid metadata, caption corpora,
binary masks (PGM + JSON sidecar) and region lists (JSON-lines).

Container layout (.emb): magic "PEMB", u32 LE version=1, u32 LE dtype=1
(float32), u64 LE rows, u64 LE cols, then rows*cols float32 LE row-major.
Grid embeddings are stored row-major with index = gy * grid_w + gx.
The normalized flag does not fit the fixed binary header; it lives in a
sidecar "<path>.json" next to the container (absent means False).
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from slideselect.errors import (
    BadMagicError,
    CaptionFormatError,
    DimensionOverflowError,
    DuplicateIdError,
    FormatError,
    TruncatedPayloadError,
    ValidationError,
    VersionMismatchError,
)

MAGIC = b"PEMB"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sIIQQ")
# guards against allocating absurd buffers from a corrupt header
_MAX_ELEMENTS = 1 << 40

NORM_TOL = 1e-4

STRATEGIES = ("random", "diversity", "proto_standard", "proto_adaptive")


@dataclass
class EmbeddingContainer:
    values: np.ndarray  # (rows, cols) float32
    normalized: bool = False
    zero_rows: tuple = ()  # row indices with zero norm, flagged on load

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass
class GridMeta:
    wsi_id: str
    grid_h: int
    grid_w: int
    stride_px: int
    patch_px: int
    mpp: float
    level0_h: int
    level0_w: int

    def validate(self) -> None:
        if self.stride_px < 1 or self.patch_px < 1:
            raise ValidationError("stride_px and patch_px must be >= 1")
        if self.grid_h != self.level0_h // self.stride_px:
            raise ValidationError(
                f"grid_h={self.grid_h} != floor(level0_h / stride_px)="
                f"{self.level0_h // self.stride_px}"
            )
        if self.grid_w != self.level0_w // self.stride_px:
            raise ValidationError(
                f"grid_w={self.grid_w} != floor(level0_w / stride_px)="
                f"{self.level0_w // self.stride_px}"
            )


@dataclass
class CaptionRecord:
    id: str
    caption: str
    source: str = ""
    parent_caption: str | None = None


@dataclass
class Region:
    wsi_id: str
    x_px: int
    y_px: int
    w_px: int
    h_px: int
    score: float
    rank: int
    strategy: str

    def validate(self, level0_w: int | None = None, level0_h: int | None = None) -> None:
        if self.w_px <= 0 or self.h_px <= 0:
            raise ValidationError(f"region {self.wsi_id}#{self.rank}: empty extent")
        if self.x_px < 0 or self.y_px < 0:
            raise ValidationError(f"region {self.wsi_id}#{self.rank}: negative origin")
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if level0_w is not None and self.x_px + self.w_px > level0_w:
            raise ValidationError(f"region {self.wsi_id}#{self.rank}: exceeds slide width")
        if level0_h is not None and self.y_px + self.h_px > level0_h:
            raise ValidationError(f"region {self.wsi_id}#{self.rank}: exceeds slide height")

    def overlaps(self, other: "Region") -> bool:
        if self.wsi_id != other.wsi_id:
            return False
        return (
            self.x_px < other.x_px + other.w_px
            and other.x_px < self.x_px + self.w_px
            and self.y_px < other.y_px + other.h_px
            and other.y_px < self.y_px + self.h_px
        )


@dataclass
class BinaryMask:
    bits: np.ndarray  # (height, width) bool
    scale_to_level0: float  # level-0 pixels per mask cell

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValidationError("mask must be 2-D")
        if self.scale_to_level0 <= 0:
            raise ValidationError("scale_to_level0 must be > 0")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


# ---------------------------------------------------------------------------
# Embedding containers


def _flags_path(path: Path) -> Path:
    return Path(str(path) + ".json")


def write_container(matrix, normalized: bool, path) -> None:
    path = Path(path)
    values = np.ascontiguousarray(matrix, dtype=np.float32)
    if values.ndim != 2:
        raise ValidationError("container payload must be a 2-D matrix")
    if not np.isfinite(values).all():
        raise ValidationError("container payload contains non-finite values")
    if normalized:
        norms = np.linalg.norm(values.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
        if bad.size:
            raise ValidationError(
                f"normalized flag set but rows {bad[:8].tolist()} are not unit-norm"
            )
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_F32, values.shape[0], values.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())
    _flags_path(path).write_text(json.dumps({"normalized": bool(normalized)}) + "\n")


def read_container(path) -> EmbeddingContainer:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    magic, version, dtype, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if rows * cols > _MAX_ELEMENTS:
        raise DimensionOverflowError(f"{path}: {rows}x{cols} exceeds element limit")
    expected = rows * cols * 4
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload truncated ({len(payload)} bytes, expected {expected})"
        )
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    if not np.isfinite(values).all():
        raise FormatError(f"{path}: payload contains non-finite values")

    normalized = False
    fp = _flags_path(path)
    if fp.exists():
        normalized = bool(json.loads(fp.read_text()).get("normalized", False))

    norms = np.linalg.norm(values.astype(np.float64), axis=1)
    zero_rows = tuple(int(i) for i in np.flatnonzero(norms == 0.0))
    if normalized:
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
        if bad.size:
            raise ValidationError(
                f"{path}: normalized flag set but rows {bad[:8].tolist()} are not unit-norm"
            )
    elif zero_rows:
        warnings.warn(
            f"{path}: {len(zero_rows)} all-zero embedding rows; "
            "they will be treated as excluded cells",
            stacklevel=2,
        )
    return EmbeddingContainer(values=values, normalized=normalized, zero_rows=zero_rows)


# ---------------------------------------------------------------------------
# Grid metadata


def grid_meta_path(container_path) -> Path:
    p = Path(container_path)
    return p.with_name(p.stem + ".grid.json")


def write_grid_meta(meta: GridMeta, path) -> None:
    meta.validate()
    Path(path).write_text(json.dumps(meta.__dict__, indent=2) + "\n")


def read_grid_meta(path) -> GridMeta:
    try:
        data = json.loads(Path(path).read_text())
        meta = GridMeta(**data)
    except (json.JSONDecodeError, TypeError) as exc:
        raise FormatError(f"{path}: invalid grid metadata: {exc}") from exc
    meta.validate()
    return meta


def check_grid_pair(container: EmbeddingContainer, meta: GridMeta) -> None:
    """Container rows must tile the full grid; load-time error otherwise."""
    if container.rows != meta.grid_h * meta.grid_w:
        raise ValidationError(
            f"{meta.wsi_id}: container has {container.rows} rows but grid is "
            f"{meta.grid_h}x{meta.grid_w} = {meta.grid_h * meta.grid_w}"
        )


# ---------------------------------------------------------------------------
# Captions (JSON-lines)


def read_captions(path) -> list[CaptionRecord]:
    records: list[CaptionRecord] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CaptionFormatError(f"{path}: malformed line {lineno}: {exc}") from exc
            if not isinstance(obj, dict) or "id" not in obj or "caption" not in obj:
                raise CaptionFormatError(
                    f"{path}: line {lineno}: record needs 'id' and 'caption' fields"
                )
            rid = str(obj["id"])
            if not obj["caption"]:
                raise CaptionFormatError(f"{path}: line {lineno}: empty caption")
            if rid in seen:
                raise DuplicateIdError(
                    f"{path}: duplicate id {rid!r} on lines {seen[rid]} and {lineno}"
                )
            seen[rid] = lineno
            records.append(
                CaptionRecord(
                    id=rid,
                    caption=str(obj["caption"]),
                    source=str(obj.get("source", "")),
                    parent_caption=obj.get("parent_caption"),
                )
            )
    return records


def write_captions(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {"id": rec.id, "caption": rec.caption, "source": rec.source}
            if rec.parent_caption is not None:
                obj["parent_caption"] = rec.parent_caption
            fh.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# Regions (JSON-lines)

_REGION_FIELDS = ("wsi_id", "x_px", "y_px", "w_px", "h_px", "score", "rank", "strategy")


def validate_regions(regions) -> None:
    for reg in regions:
        reg.validate()
    by_wsi: dict[str, list[Region]] = {}
    for reg in regions:
        by_wsi.setdefault(reg.wsi_id, []).append(reg)
    for wsi_id, regs in by_wsi.items():
        for i in range(len(regs)):
            for j in range(i + 1, len(regs)):
                if regs[i].overlaps(regs[j]):
                    raise ValidationError(
                        f"{wsi_id}: regions rank {regs[i].rank} and rank "
                        f"{regs[j].rank} overlap"
                    )


def write_regions(regions, path) -> None:
    regions = list(regions)
    validate_regions(regions)
    with open(path, "w", encoding="utf-8") as fh:
        for reg in regions:
            obj = {name: getattr(reg, name) for name in _REGION_FIELDS}
            fh.write(json.dumps(obj) + "\n")


def read_regions(path) -> list[Region]:
    regions: list[Region] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: malformed line {lineno}: {exc}") from exc
            try:
                regions.append(Region(**{k: obj[k] for k in _REGION_FIELDS}))
            except KeyError as exc:
                raise FormatError(f"{path}: line {lineno}: missing field {exc}") from exc
    validate_regions(regions)
    return regions


# ---------------------------------------------------------------------------
# Masks (P5 PGM + JSON sidecar)


def mask_sidecar_path(pgm_path) -> Path:
    p = Path(pgm_path)
    return p.with_name(p.stem + ".mask.json")


def write_pgm(array: np.ndarray, path) -> None:
    """8-bit grayscale P5; values clipped to [0, 255]."""
    arr = np.clip(np.asarray(array), 0, 255).astype(np.uint8)
    if arr.ndim != 2:
        raise ValidationError("PGM payload must be 2-D")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise BadMagicError(f"{path}: not a P5 PGM")
    # header: "P5" <ws> width <ws> height <ws> maxval <single ws> payload
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: malformed PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace before payload
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    payload = raw[pos : pos + w * h]
    if len(payload) < w * h:
        raise TruncatedPayloadError(f"{path}: PGM payload truncated")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def write_mask(mask: BinaryMask, path) -> None:
    write_pgm(mask.bits.astype(np.uint8) * 255, path)
    mask_sidecar_path(path).write_text(
        json.dumps({"scale_to_level0": mask.scale_to_level0}) + "\n"
    )


def read_mask(path) -> BinaryMask:
    bits = read_pgm(path) > 0
    sidecar = mask_sidecar_path(path)
    if not sidecar.exists():
        raise FormatError(f"{path}: missing sidecar {sidecar.name}")
    scale = float(json.loads(sidecar.read_text())["scale_to_level0"])
    return BinaryMask(bits=bits, scale_to_level0=scale)
