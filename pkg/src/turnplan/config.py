"""Job and tool-catalog documents (JSON) and their loaders.

A job names the part mesh, resolutions, axis search options, chuck,
machine envelope, tool catalog, stock allowances, tolerance and setup
charge.  Relative paths resolve against the document's directory.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema

from .actions import MachineEnvelope, ToolAssembly, ToolInsert
from .errors import ConfigError
from .fixture import ChuckModel
from .solids.grid import Axis, VoxelGrid, voxelize
from .solids.mesh import cylinder_mesh, load_mesh
from .solids.raster import raster_from_pgm

logger = logging.getLogger(__name__)

JOB_SCHEMA_ID = "turnplan-job/1"
TOOLS_SCHEMA_ID = "turnplan-tools/1"

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_range = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

JOB_SCHEMA = {
    "type": "object",
    "required": ["schema", "part", "voxel_size", "chuck", "envelope", "tools", "tol"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": JOB_SCHEMA_ID},
        "part": {"type": "string"},
        "unit_scale": _pos,
        "voxel_size": _pos,
        "section_pixel": _pos,
        "axes": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n_dirs": {"type": "integer", "minimum": 1},
                "n_offsets": {"type": "integer", "minimum": 1},
                "top_k": {"type": "integer", "minimum": 1},
                "refine_budget": {"type": "integer", "minimum": 0},
                "user_axes": {"type": "array", "items": {
                    "type": "object", "required": ["point", "direction"],
                    "additionalProperties": False,
                    "properties": {"point": _vec3, "direction": _vec3}}},
                "select": {"enum": ["best", "user"]},
            },
        },
        "chuck": {
            "type": "object", "additionalProperties": False,
            "required": ["jaw_count", "jaw_axial_length", "grip_radius_range",
                         "min_contact_length", "min_angular_coverage"],
            "properties": {
                "jaw_count": {"type": "integer", "minimum": 2},
                "jaw_axial_length": _pos,
                "grip_radius_range": _range,
                "min_contact_length": _pos,
                "min_angular_coverage": _pos,
                "jaw_height": _nonneg,
                "body": {"type": "object", "additionalProperties": False,
                         "required": ["radius", "length"],
                         "properties": {"radius": _pos, "length": _pos}},
            },
        },
        "grips": {
            "type": "object", "additionalProperties": False,
            "properties": {"z_step": _pos, "phi_step": _pos,
                           "max_fixtures": {"type": "integer", "minimum": 1}},
        },
        "envelope": {
            "type": "object", "additionalProperties": False,
            "required": ["z_range", "x_range"],
            "properties": {
                "z_range": _range, "x_range": _range,
                "exclusions": {"type": "array", "items": {
                    "type": "object", "required": ["z_range", "x_range"],
                    "additionalProperties": False,
                    "properties": {"z_range": _range, "x_range": _range}}},
            },
        },
        "tools": {"type": "string"},
        "stock": {"type": "object", "additionalProperties": False,
                  "properties": {"radial_allowance": _nonneg, "axial_allowance": _nonneg}},
        "tol": _nonneg,
        "setup_cost": _nonneg,
        "plans": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
}

TOOLS_SCHEMA = {
    "type": "object",
    "required": ["schema", "tools"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": TOOLS_SCHEMA_ID},
        "tools": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["name", "insert", "origin_pixel", "pixel_size", "cost_rate",
                         "feed_rate"],
            "properties": {
                "name": {"type": "string"},
                "insert": {"type": "string"},
                "holder": {"type": ["string", "null"]},
                "origin_pixel": {"type": "array", "items": {"type": "integer"},
                                 "minItems": 2, "maxItems": 2},
                "pixel_size": _pos,
                "cost_rate": _pos,
                "feed_rate": _pos,
                "setup": {"type": "string"},
                "orientation": {"type": "integer"},
            },
        }},
    },
}


def _validate(doc, schema, where: str):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}:{path}" if where else path, e.message)


def _read_json(path: Path, where: str):
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(where, f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(where, f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc


@dataclass(frozen=True, eq=False)
class ToolSpec:
    name: str
    insert: Path
    holder: Optional[Path]
    origin_pixel: tuple
    pixel_size: float
    cost_rate: float
    feed_rate: float
    setup: str = ""
    orientation: int = 0

    def build(self, pixel: float) -> ToolAssembly:
        if abs(self.pixel_size - pixel) > 1e-9 * pixel:
            raise ConfigError(f"tools.{self.name}.pixel_size",
                              f"{self.pixel_size} differs from the section pixel {pixel}")
        profile = raster_from_pgm(self.insert, pixel, self.origin_pixel)
        holder = None
        if self.holder is not None:
            holder = raster_from_pgm(self.holder, pixel, self.origin_pixel)
        insert = ToolInsert(self.name, profile)
        return ToolAssembly.make(self.name, insert, holder, self.setup, self.orientation,
                                 self.cost_rate, self.feed_rate)


def load_tools(path) -> List[ToolSpec]:
    path = Path(path)
    doc = _read_json(path, "tools")
    _validate(doc, TOOLS_SCHEMA, "tools")
    base = path.parent
    out = []
    names = set()
    for i, t in enumerate(doc["tools"]):
        if t["name"] in names:
            raise ConfigError(f"tools:tools.{i}.name", f"duplicate tool name {t['name']!r}")
        names.add(t["name"])
        insert = base / t["insert"]
        holder = base / t["holder"] if t.get("holder") else None
        for key, p in (("insert", insert), ("holder", holder)):
            if p is not None and not p.is_file():
                raise ConfigError(f"tools:tools.{i}.{key}", f"file not found: {p}")
        out.append(ToolSpec(t["name"], insert, holder, tuple(t["origin_pixel"]),
                            float(t["pixel_size"]), float(t["cost_rate"]),
                            float(t["feed_rate"]), t.get("setup", ""),
                            int(t.get("orientation", 0))))
    return out


@dataclass(frozen=True, eq=False)
class JobConfig:
    path: Path
    raw: Dict[str, Any]
    part: Path
    unit_scale: float
    voxel_size: float
    section_pixel: float
    n_dirs: int
    n_offsets: int
    top_k: int
    refine_budget: int
    user_axes: List[Axis]
    select: str
    chuck: Dict[str, Any]
    z_step: float
    phi_step: float
    max_fixtures: Optional[int]
    envelope: Dict[str, Any]
    tools_path: Path
    radial_allowance: float
    axial_allowance: float
    tol: float
    setup_cost: float
    plans: int
    output_dir: Path
    seed: int
    tools: List[ToolSpec] = field(default_factory=list)

    def digest(self) -> str:
        """Hash of the canonical job document plus the bytes of every referenced file."""
        h = hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode())
        files = [self.part, self.tools_path]
        for t in self.tools:
            files += [t.insert] + ([t.holder] if t.holder else [])
        for f in files:
            h.update(f.read_bytes())
        return h.hexdigest()[:16]

    def load_part(self) -> VoxelGrid:
        mesh = load_mesh(self.part, self.unit_scale)
        grid = voxelize(mesh, self.voxel_size)
        if grid.is_empty():
            raise ConfigError("part", f"{self.part} voxelizes to an empty grid")
        return grid

    def build_chuck(self) -> ChuckModel:
        c = self.chuck
        body = None
        if "body" in c:
            mesh = cylinder_mesh(c["body"]["radius"], -c["body"]["length"], 0.0)
            body = voxelize(mesh, self.voxel_size)
        try:
            return ChuckModel(c["jaw_count"], c["jaw_axial_length"],
                              tuple(c["grip_radius_range"]), c["min_contact_length"],
                              c["min_angular_coverage"], body, c.get("jaw_height", 0.0))
        except ValueError as exc:
            raise ConfigError("chuck", str(exc)) from None

    def build_envelope(self) -> MachineEnvelope:
        e = self.envelope
        excl = [(x["z_range"], x["x_range"]) for x in e.get("exclusions", [])]
        try:
            return MachineEnvelope.box(e["z_range"], e["x_range"], self.section_pixel, excl)
        except ValueError as exc:
            raise ConfigError("envelope", str(exc)) from None

    def build_tools(self) -> List[ToolAssembly]:
        return [t.build(self.section_pixel) for t in self.tools]


def load_job(path, unit_scale: Optional[float] = None) -> JobConfig:
    """Parse and validate a job document; raises :class:`ConfigError` with a field path.

    ``unit_scale`` overrides the document's mesh unit scale (mm per STL unit).
    """
    path = Path(path)
    doc = _read_json(path, "<root>")
    if unit_scale is not None and isinstance(doc, dict):
        doc["unit_scale"] = unit_scale
    _validate(doc, JOB_SCHEMA, "")
    base = path.parent
    part = base / doc["part"]
    if not part.is_file():
        raise ConfigError("part", f"file not found: {part}")
    tools_path = base / doc["tools"]
    if not tools_path.is_file():
        raise ConfigError("tools", f"file not found: {tools_path}")
    for key in ("grip_radius_range",):
        lo, hi = doc["chuck"][key]
        if not 0 < lo < hi:
            raise ConfigError(f"chuck.{key}", "expected 0 < r_min < r_max")
    for key in ("z_range", "x_range"):
        lo, hi = doc["envelope"][key]
        if not lo < hi:
            raise ConfigError(f"envelope.{key}", "expected lower < upper")
    axes = doc.get("axes", {})
    user_axes = []
    for i, ua in enumerate(axes.get("user_axes", [])):
        try:
            user_axes.append(Axis.make(ua["point"], ua["direction"]))
        except ValueError as exc:
            raise ConfigError(f"axes.user_axes.{i}", str(exc)) from None
    select = axes.get("select", "best")
    if select == "user" and not user_axes:
        raise ConfigError("axes.select", "'user' needs at least one user axis")
    voxel = float(doc["voxel_size"])
    grips = doc.get("grips", {})
    stock = doc.get("stock", {})
    job = JobConfig(
        path=path, raw=doc, part=part, unit_scale=float(doc.get("unit_scale", 1.0)),
        voxel_size=voxel, section_pixel=float(doc.get("section_pixel", voxel)),
        n_dirs=axes.get("n_dirs", 20), n_offsets=axes.get("n_offsets", 1),
        top_k=axes.get("top_k", 3), refine_budget=axes.get("refine_budget", 0),
        user_axes=user_axes, select=select, chuck=doc["chuck"],
        z_step=float(grips.get("z_step", doc["chuck"]["jaw_axial_length"] / 2)),
        phi_step=float(grips.get("phi_step", 0.5)), max_fixtures=grips.get("max_fixtures"),
        envelope=doc["envelope"], tools_path=tools_path,
        radial_allowance=float(stock.get("radial_allowance", 0.0)),
        axial_allowance=float(stock.get("axial_allowance", 0.0)),
        tol=float(doc["tol"]), setup_cost=float(doc.get("setup_cost", 0.0)),
        plans=doc.get("plans", 1), output_dir=base / doc.get("output_dir", "runs"),
        seed=doc.get("seed", 0),
    )
    return JobConfig(**{**job.__dict__, "tools": load_tools(tools_path)})
