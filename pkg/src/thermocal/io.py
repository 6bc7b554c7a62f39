"""File formats: binary PGM, CSV grids and profiles, JSON manifests."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .frame import ThermalFrame
from .radiometry import EnvironmentConditions
from .regions import RegionMask, mask_from_labels


def _read_token(data: bytes, pos: int):
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise InputError("truncated PGM header")
    return data[start:pos], pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary (P5) or plain (P2) PGM; returns (integer array, maxval)."""
    data = Path(path).read_bytes()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P2"):
        raise InputError(f"{path}: not a PGM file (magic {magic!r})")
    width, pos = _read_token(data, pos)
    height, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    w, h, maxval = int(width), int(height), int(maxval)
    if not 0 < maxval < 65536:
        raise InputError(f"{path}: bad maxval {maxval}")
    if magic == b"P2":
        vals = np.array(data[pos:].split(), dtype=np.int64)
        if vals.size < w * h:
            raise InputError(f"{path}: expected {w * h} samples, found {vals.size}")
        return vals[:w * h].reshape(h, w), maxval
    pos += 1  # single whitespace after maxval
    dtype = ">u2" if maxval > 255 else "u1"
    count = w * h
    need = count * np.dtype(dtype).itemsize
    if len(data) - pos < need:
        raise InputError(f"{path}: pixel data truncated")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).reshape(h, w)
    return arr.astype(np.int64), maxval


def write_pgm(path, image, maxval: int = 65535) -> None:
    """Write integer samples as binary PGM (16-bit big-endian when maxval > 255)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise InputError("PGM images must be 2-D")
    if img.min() < 0 or img.max() > maxval:
        raise InputError(f"PGM samples outside [0, {maxval}]")
    h, w = img.shape
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + img.astype(dtype).tobytes())


def write_gray(path, gray, maxval: int = 65535) -> None:
    """Gray fractions in [0, 1] -> 16-bit PGM."""
    g = np.clip(np.asarray(gray, dtype=float), 0.0, 1.0)
    write_pgm(path, np.rint(g * maxval).astype(np.int64), maxval)


def read_gray(path) -> np.ndarray:
    arr, maxval = read_pgm(path)
    return arr / float(maxval)


def write_mask(path, bitmap) -> None:
    write_pgm(path, np.where(np.asarray(bitmap, dtype=bool), 255, 0), 255)


def read_mask(path, label: str = "region") -> RegionMask:
    arr, maxval = read_pgm(path)
    return RegionMask(arr > 0, label)


def write_grid_csv(path, grid, decimals: int = 6) -> None:
    g = np.asarray(grid, dtype=float)
    fmt = f"{{:.{decimals}f}}"
    lines = [",".join(fmt.format(v) for v in row) for row in g]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: malformed temperature CSV: {exc}") from exc


def write_profiles_csv(path, original, enhanced, gt) -> None:
    lines = ["frame,original,enhanced,gt"]
    for i, (o, e, g) in enumerate(zip(original.values, enhanced.values, gt.values)):
        lines.append(f"{i},{o:.6f},{e:.6f},{g:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class FrameEntry:
    gray: str
    temps: str
    timestamp: float = 0.0


@dataclass
class SequenceManifest:
    name: str
    frames: list
    masks: dict
    emissivity: dict
    env: EnvironmentConditions
    target: str = "target"
    reference: str = "reference"
    calibration: str | None = None
    base_dir: Path = field(default_factory=Path)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "frames": [{"gray": f.gray, "temps": f.temps, "timestamp": f.timestamp} for f in self.frames],
            "masks": self.masks,
            "emissivity": self.emissivity,
            "target": self.target,
            "reference": self.reference,
            "env": self.env.to_dict(),
            "calibration": self.calibration,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        if not self.frames:
            raise InputError("manifest lists no frames")
        stamps = [f.timestamp for f in self.frames]
        if any(b < a for a, b in zip(stamps, stamps[1:])):
            raise InputError("frame timestamps must be non-decreasing")
        for role in (self.target, self.reference):
            if role not in self.masks:
                raise InputError(f"manifest has no mask for material {role!r}")
            if role not in self.emissivity:
                raise InputError(f"manifest has no emissivity for material {role!r}")
        paths = [p for f in self.frames for p in (f.gray, f.temps)]
        for spec in self.masks.values():
            paths.append(spec if isinstance(spec, str) else spec["label_image"])
        if self.calibration:
            paths.append(self.calibration)
        for rel in paths:
            if not self.resolve(rel).is_file():
                raise InputError(f"missing file referenced by manifest: {self.resolve(rel)}")

    def load_frames(self) -> list:
        frames = []
        for f in self.frames:
            frames.append(ThermalFrame(read_gray(self.resolve(f.gray)), read_grid_csv(self.resolve(f.temps)),
                                       f.timestamp))
        return frames

    def load_mask(self, label: str) -> RegionMask:
        spec = self.masks[label]
        if isinstance(spec, str):
            return read_mask(self.resolve(spec), label)
        from PIL import Image

        img = np.asarray(Image.open(self.resolve(spec["label_image"])).convert("RGB"))
        return mask_from_labels(img, spec["color"], label)


def load_manifest(path, default_exponent: float | None = None) -> SequenceManifest:
    """Read and validate a manifest. ``default_exponent`` fills a missing env sensor_exponent."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {path} is not valid JSON: {exc}") from exc
    try:
        frames = [FrameEntry(f["gray"], f["temps"], float(f.get("timestamp", 0.0))) for f in data["frames"]]
        m = SequenceManifest(
            name=data.get("name", path.stem),
            frames=frames,
            masks=data["masks"],
            emissivity={k: float(v) for k, v in data["emissivity"].items()},
            env=_env_from(data.get("env", {}), default_exponent),
            target=data.get("target", "target"),
            reference=data.get("reference", "reference"),
            calibration=data.get("calibration"),
            base_dir=path.parent,
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"manifest {path} is missing field {exc}") from exc
    m.validate()
    return m


def _env_from(data: dict, default_exponent):
    data = dict(data)
    if default_exponent is not None:
        data.setdefault("sensor_exponent", default_exponent)
    return EnvironmentConditions.from_dict(data)


def write_sequence(out_dir, synth_output, name: str = "synthetic") -> Path:
    """Lay out a SynthOutput as a manifest-described directory; returns the manifest path."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    entries = []
    for i, f in enumerate(synth_output.frames):
        gp = f"frames/gray_{i:04d}.pgm"
        tp = f"frames/temp_{i:04d}.csv"
        write_gray(out / gp, f.gray)
        write_grid_csv(out / tp, f.temps)
        entries.append(FrameEntry(gp, tp, f.timestamp))
    write_mask(out / "masks/target.pgm", synth_output.target_mask.bitmap)
    write_mask(out / "masks/reference.pgm", synth_output.reference_mask.bitmap)
    cfg = synth_output.manifest["config"]
    manifest = SequenceManifest(
        name=name,
        frames=entries,
        masks={"target": "masks/target.pgm", "reference": "masks/reference.pgm"},
        emissivity={"target": cfg["eps_target"], "reference": cfg["eps_reference"]},
        env=EnvironmentConditions.from_dict(cfg["env"]),
    )
    manifest.save(out / "manifest.json")
    for k, grid in enumerate(synth_output.gt_temps):
        (out / "gt").mkdir(exist_ok=True)
        write_grid_csv(out / f"gt/gt_{k:04d}.csv", grid)
    (out / "synth.json").write_text(json.dumps(synth_output.manifest, indent=2, sort_keys=True) + "\n")
    return out / "manifest.json"


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
