"""Readers and writers for the on-disk formats used between stages.

* depth / alpha rasters: little-endian PFM (scale -1.0), rows stored
  bottom-to-top as the format prescribes, with a sibling ``<stem>.valid.png``
  mask (255 = valid)
* flow: ``FLO2`` binary (u32 W, u32 H, then f32 ``(f_u, f_v)`` pairs
  row-major) plus ``<stem>.valid.png``
* voxel flow fields: ``VXF1`` binary
* point clouds and Gaussian scenes: binary little-endian PLY
* images and masks: 8-bit PNG
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError, MissingInputError
from .gaussians import DynamicGaussians, GaussianScene, StaticGaussians
from .rasters import DepthMap, FlowMap


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing input file: {path}")
    return path


def mask_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".valid.png")


# -- PNG --------------------------------------------------------------------

def quantize(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and round half away from zero to 8 bits."""
    x = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(x + 0.5).astype(np.uint8)


def write_image(path, image: np.ndarray) -> None:
    PILImage.fromarray(quantize(image)).save(path, format="PNG")


def read_image(path) -> np.ndarray:
    with PILImage.open(_require(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_mask(path, mask: np.ndarray) -> None:
    PILImage.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with PILImage.open(_require(path)) as im:
        return np.asarray(im.convert("L")) >= 128


# -- PFM --------------------------------------------------------------------

def write_pfm(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype="<f4")
    if values.ndim == 2:
        header = b"Pf\n"
    elif values.ndim == 3 and values.shape[2] == 3:
        header = b"PF\n"
    else:
        raise FormatError(f"PFM expects HxW or HxWx3, got {values.shape}")
    h, w = values.shape[:2]
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(values[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    data = _require(path).read_bytes()
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+(\S+)\s", data)
    if m is None:
        raise FormatError(f"{path}: not a PFM file")
    channels = 3 if m.group(1) == b"PF" else 1
    w, h, scale = int(m.group(2)), int(m.group(3)), float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    body = data[m.end():]
    count = w * h * channels
    if len(body) < 4 * count:
        raise FormatError(f"{path}: truncated PFM payload")
    arr = np.frombuffer(body, dtype=dtype, count=count).astype(np.float64)
    arr = arr.reshape((h, w, 3) if channels == 3 else (h, w))
    return arr[::-1].copy()


def write_depth(path, depth: DepthMap) -> None:
    values = np.where(depth.valid, depth.values, 0.0)
    write_pfm(path, values)
    write_mask(mask_path(path), depth.valid)


def read_depth(path) -> DepthMap:
    values = read_pfm(path)
    mp = mask_path(path)
    valid = read_mask(mp) if mp.is_file() else np.isfinite(values) & (values > 0)
    return DepthMap(values, valid)


# -- FLO2 -------------------------------------------------------------------

FLOW_MAGIC = b"FLO2"


def write_flow(path, flow: FlowMap) -> None:
    h, w = flow.shape
    values = np.where(flow.valid[..., None], flow.values, 0.0).astype("<f4")
    with open(path, "wb") as f:
        f.write(FLOW_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(values.tobytes())
    write_mask(mask_path(path), flow.valid)


def read_flow(path) -> FlowMap:
    data = _require(path).read_bytes()
    if data[:4] != FLOW_MAGIC:
        raise FormatError(f"{path}: bad flow magic {data[:4]!r}")
    w, h = struct.unpack_from("<II", data, 4)
    payload = data[12:]
    if len(payload) != 8 * w * h:
        raise FormatError(f"{path}: flow payload size mismatch")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(h, w, 2)
    mp = mask_path(path)
    valid = read_mask(mp) if mp.is_file() else np.ones((h, w), dtype=bool)
    return FlowMap(values, valid)


# -- VXF1 -------------------------------------------------------------------

VOXEL_MAGIC = b"VXF1"
_VOXEL_RECORD = np.dtype([("occupied", "u1"), ("flow", "<f4", (3,)), ("confidence", "<f4")])


def write_voxel_field(path, vf) -> None:
    """Voxels are written in C order over ``(nx, ny, nz)``."""
    records = np.zeros(vf.occupancy.size, dtype=_VOXEL_RECORD)
    records["occupied"] = vf.occupancy.reshape(-1)
    records["flow"] = np.where(vf.occupancy[..., None], vf.flow, 0.0).reshape(-1, 3)
    records["confidence"] = np.where(vf.occupancy, vf.confidence, 0.0).reshape(-1)
    with open(path, "wb") as f:
        f.write(VOXEL_MAGIC)
        f.write(struct.pack("<4d", *vf.origin, vf.voxel_size))
        f.write(struct.pack("<3I", *vf.dims))
        f.write(records.tobytes())


def read_voxel_field(path):
    from .flowfuse import VoxelFlowField

    data = _require(path).read_bytes()
    if data[:4] != VOXEL_MAGIC:
        raise FormatError(f"{path}: bad voxel field magic {data[:4]!r}")
    ox, oy, oz, s = struct.unpack_from("<4d", data, 4)
    dims = struct.unpack_from("<3I", data, 36)
    n = dims[0] * dims[1] * dims[2]
    payload = data[48:]
    if len(payload) != n * _VOXEL_RECORD.itemsize:
        raise FormatError(f"{path}: voxel payload size mismatch")
    rec = np.frombuffer(payload, dtype=_VOXEL_RECORD)
    return VoxelFlowField(
        origin=np.array([ox, oy, oz]), voxel_size=s, dims=tuple(dims),
        flow=rec["flow"].astype(np.float64).reshape(dims + (3,)),
        confidence=rec["confidence"].astype(np.float64).reshape(dims),
        occupancy=rec["occupied"].astype(bool).reshape(dims),
    )


# -- PLY --------------------------------------------------------------------

_PLY_TYPES = {"float": "<f4", "double": "<f8", "uchar": "u1", "int": "<i4", "uint": "<u4"}
_PLY_NAMES = {np.dtype(v).str: k for k, v in _PLY_TYPES.items()}


def _write_ply(path, records: np.ndarray, comments=()) -> None:
    lines = ["ply", "format binary_little_endian 1.0"]
    lines += [f"comment {c}" for c in comments]
    lines.append(f"element vertex {len(records)}")
    for name in records.dtype.names:
        lines.append(f"property {_PLY_NAMES[records.dtype[name].str]} {name}")
    lines.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        f.write(records.tobytes())


def _read_ply(path):
    data = _require(path).read_bytes()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise FormatError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise FormatError(f"{path}: only binary little-endian PLY is supported")
    comments, props, count = [], [], None
    for line in header:
        parts = line.split()
        if parts[0] == "comment":
            comments.append(line[len("comment "):])
        elif parts[0] == "element":
            if parts[1] != "vertex" or count is not None:
                raise FormatError(f"{path}: unsupported element {parts[1]!r}")
            count = int(parts[2])
        elif parts[0] == "property":
            if parts[1] not in _PLY_TYPES:
                raise FormatError(f"{path}: unsupported property type {parts[1]!r}")
            props.append((parts[2], _PLY_TYPES[parts[1]]))
    dtype = np.dtype(props)
    body = data[end + len(b"end_header\n"):]
    if count is None or len(body) != count * dtype.itemsize:
        raise FormatError(f"{path}: vertex payload size mismatch")
    return np.frombuffer(body, dtype=dtype, count=count), comments


def write_pointcloud(path, cloud) -> None:
    records = np.zeros(len(cloud.positions), dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                                    ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    for i, axis in enumerate("xyz"):
        records[axis] = cloud.positions[:, i]
    q = quantize(cloud.colors)
    for i, ch in enumerate(("red", "green", "blue")):
        records[ch] = q[:, i]
    _write_ply(path, records)


def read_pointcloud(path):
    from .depthfuse import PointCloud

    rec, _ = _read_ply(path)
    missing = {"x", "y", "z", "red", "green", "blue"} - set(rec.dtype.names)
    if missing:
        raise FormatError(f"{path}: point cloud lacks {sorted(missing)}")
    pos = np.stack([rec[a].astype(np.float64) for a in "xyz"], axis=1)
    col = np.stack([rec[c].astype(np.float64) / 255.0 for c in ("red", "green", "blue")], axis=1)
    return PointCloud(pos, col)


# Normative per-vertex field order of a serialized GaussianScene. Scales are
# stored as log standard deviations and opacity as a logit, matching the
# in-memory parameterization.
SCENE_FIELDS = ("x", "y", "z", "sx", "sy", "sz", "qw", "qx", "qy", "qz", "r", "g", "b",
                "opacity", "t_mu", "t_sigma", "vx", "vy", "vz", "is_dynamic")
_SCENE_DTYPE = np.dtype([(name, "<f8") for name in SCENE_FIELDS[:-1]] + [("is_dynamic", "u1")])
_SCENE_COLUMNS = (("position", ("x", "y", "z")), ("log_scale", ("sx", "sy", "sz")),
                  ("rotation", ("qw", "qx", "qy", "qz")), ("color", ("r", "g", "b")),
                  ("velocity", ("vx", "vy", "vz")))


def write_scene(path, scene: GaussianScene) -> None:
    n_s, n_d = len(scene.statics), len(scene.dynamics)
    rec = np.zeros(n_s + n_d, dtype=_SCENE_DTYPE)
    for part, sl in ((scene.statics, slice(0, n_s)), (scene.dynamics, slice(n_s, n_s + n_d))):
        for attr, cols in _SCENE_COLUMNS:
            if attr == "velocity" and not isinstance(part, DynamicGaussians):
                continue
            arr = getattr(part, attr)
            for i, c in enumerate(cols):
                rec[c][sl] = arr[:, i]
        rec["opacity"][sl] = part.opacity_logit
    rec["t_sigma"][:n_s] = 1.0
    rec["t_mu"][n_s:] = scene.dynamics.t_mu
    rec["t_sigma"][n_s:] = scene.dynamics.t_sigma
    rec["is_dynamic"][n_s:] = 1
    bg = " ".join(repr(float(v)) for v in scene.background_color)
    _write_ply(path, rec, comments=[f"background {bg}"])


def read_scene(path) -> GaussianScene:
    rec, comments = _read_ply(path)
    if rec.dtype.names != SCENE_FIELDS:
        raise FormatError(f"{path}: scene PLY fields do not match the expected layout")
    bg = np.zeros(3)
    for c in comments:
        if c.startswith("background "):
            bg = np.array([float(v) for v in c.split()[1:4]])
    dyn = rec["is_dynamic"].astype(bool)

    def cols(mask, names):
        return np.stack([rec[n][mask].astype(np.float64) for n in names], axis=1)

    def common(mask):
        out = {attr: cols(mask, names) for attr, names in _SCENE_COLUMNS if attr != "velocity"}
        out["opacity_logit"] = rec["opacity"][mask].astype(np.float64)
        return out

    statics = StaticGaussians(**common(~dyn))
    dynamics = DynamicGaussians(**common(dyn), t_mu=rec["t_mu"][dyn].astype(np.float64),
                                t_sigma=rec["t_sigma"][dyn].astype(np.float64),
                                velocity=cols(dyn, ("vx", "vy", "vz")))
    return GaussianScene(statics, dynamics, bg)
