"""Command line: ``turnplan axes|mtv|plan --config JOB.json [--workers N] [--out DIR]``.

Exit codes: 0 success/feasible, 1 usage or config error, 2 geometrically
infeasible (the report is still written).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .actions import (c_obstacle, fixture_closure, free_space, generate_actions, mtv,
                      to_init_frame)
from .axes import AxisCandidate, find_axes
from .config import JOB_SCHEMA_ID, TOOLS_SCHEMA_ID, JobConfig, load_job
from .errors import ConfigError, InfeasibleError, TurnplanError
from .fixture import FixtureConfig, fixture_configs
from .planner import StockModel, as_turned, infer_stock, search_plans, turnability_test
from .report import (AXES_COLUMNS, STEP_COLUMNS, axes_rows, plot_gamma, plot_plan_strip,
                     plot_section, write_csv, write_json)
from .revolve import HalfSection, tc_implicit, write_section
from .solids.grid import Axis
from .solids.mesh import save_stl, stepped_shaft_mesh
from .solids.raster import Raster2D, write_pgm

logger = logging.getLogger("turnplan")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2


def run_dir(job: JobConfig, out: Optional[Path] = None) -> Path:
    d = Path(out) if out is not None else job.output_dir
    d = d / job.digest()
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_axes(job: JobConfig, out: Path, workers: int = 1) -> List[AxisCandidate]:
    """Rank candidate axes and write the ratio table, closures and a bar chart."""
    part = job.load_part()
    cands = find_axes(part, job.section_pixel, job.n_dirs, job.n_offsets, job.top_k,
                      job.refine_budget, job.user_axes, job.seed, workers)
    rows = axes_rows(cands)
    write_csv(rows, AXES_COLUMNS, out / "axes.csv")
    lines = [f"{'rank':>4} {'provenance':<10} {'gamma':>8}  axis"]
    for r, c in zip(rows, cands):
        lines.append(f"{r['rank']:>4} {c.provenance:<10} {c.gamma:8.4f}  "
                     f"p=({r['px']}, {r['py']}, {r['pz']}) d=({r['dx']}, {r['dy']}, {r['dz']})")
    (out / "axes.txt").write_text("\n".join(lines) + "\n")
    write_json({"candidates": [{"rank": i, "provenance": c.provenance,
                                "gamma": round(c.gamma, 9), "axis": c.axis.to_json(),
                                "part_volume_mm3": round(c.report.part_volume, 6),
                                "tc_volume_mm3": round(c.report.tc_volume, 6)}
                               for i, c in enumerate(cands)]}, out / "axes.json")
    for i, c in enumerate(cands):
        tc = tc_implicit(part, c.axis, job.section_pixel)
        write_section(tc, out / f"tc_{i:02d}")
    plot_gamma(cands, out / "gamma.png")
    logger.info("top axis gamma %.4f (%s)", cands[0].gamma, cands[0].provenance)
    return cands


@dataclass
class Setup:
    """Everything the planner needs, in the selected axis' init frame."""

    part: object
    axis: AxisCandidate
    tc: HalfSection
    stock: StockModel
    fixtures: List[FixtureConfig]
    chuck: object
    env: object
    tools: list

    @property
    def frame(self):
        s = self.stock.section
        return (s.z0_index,) + tuple(s.dims)


def prepare(job: JobConfig, workers: int = 1) -> Setup:
    part = job.load_part()
    if job.select == "user":
        cands = find_axes(part, job.section_pixel, 1, 1, 1, 0, job.user_axes[:1], job.seed,
                          workers)
        cand = next(c for c in cands if c.provenance == "user")
    else:
        cands = find_axes(part, job.section_pixel, job.n_dirs, job.n_offsets, job.top_k,
                          job.refine_budget, job.user_axes, job.seed, workers)
        cand = cands[0]
    tc = tc_implicit(part, cand.axis, job.section_pixel, workers=workers)
    tc_init = HalfSection(Axis.z(), tc.raster)
    chuck = job.build_chuck()
    fixtures = fixture_configs(part, cand.axis, chuck, job.z_step, job.phi_step,
                               job.section_pixel, job.max_fixtures)
    stock = infer_stock(tc_init, job.radial_allowance, job.axial_allowance)
    s = stock.section
    tc_s = tc_init.reframe(s.z0_index, *s.dims)
    return Setup(part, cand, tc_s, stock, fixtures, chuck, job.build_envelope(),
                 job.build_tools())


def cmd_mtv(job: JobConfig, out: Path, fixture_id: str, tool_name: str,
            workers: int = 1) -> HalfSection:
    """Single-action MTV in the stock frame, written as PGM + header and PNG."""
    st = prepare(job, workers)
    fx = {f.id: f for f in st.fixtures}
    tools = {t.name: t for t in st.tools}
    if fixture_id not in fx:
        raise ConfigError("fixture", f"unknown fixture id {fixture_id!r}; "
                          f"known: {', '.join(sorted(fx)) or 'none'}")
    if tool_name not in tools:
        raise ConfigError("tool", f"unknown tool {tool_name!r}; "
                          f"known: {', '.join(sorted(tools)) or 'none'}")
    f, t = fx[fixture_id], tools[tool_name]
    pstar2 = fixture_closure(st.tc, f, st.chuck, job.section_pixel)
    free = free_space(c_obstacle(pstar2, t), st.env)
    q = to_init_frame(mtv(free, t.insert), f, st.tc.axis).reframe(*st.frame)
    stem = out / f"mtv_{fixture_id}_{tool_name}"
    write_section(q, stem)
    removable = q.intersect(st.stock.section)
    write_json({"fixture": fixture_id, "tool": tool_name,
                "mtv_volume_mm3": round(q.volume(), 6),
                "removable_volume_mm3": round(removable.volume(), 6)},
               stem.with_suffix(".json"))
    plot_section(st.stock.section, stem.with_suffix(".png"),
                 f"MTV {fixture_id}/{tool_name}", overlay=q)
    return q


def cmd_plan(job: JobConfig, out: Path, workers: int = 1) -> int:
    """Full pipeline; writes ``plan.json`` and step snapshots, returns the exit code."""
    st = prepare(job, workers)
    actions = generate_actions(st.fixtures, st.tools, st.chuck, st.env, job.section_pixel,
                               st.tc, st.frame, workers) if st.tools else []
    by_id = {a.id: a for a in actions}
    doc = {
        "schema": "turnplan-plan/1",
        "axis": st.axis.axis.to_json(),
        "gamma": round(st.axis.gamma, 9),
        "stock": st.stock.to_json(),
        "fixtures": [f.to_json() for f in st.fixtures],
        "catalog": [{"id": a.id, "tool": a.tool.name, "fixture": a.fixture.id,
                     "mtv_volume_mm3": round(a.mtv.volume(), 6)} for a in actions],
        "tol_mm3": job.tol,
        "setup_cost": job.setup_cost,
    }
    write_section(st.tc, out / "tc")
    write_section(st.stock.section, out / "stock")
    try:
        plans = search_plans(actions, st.stock, st.tc, job.tol, job.plans, job.setup_cost)
    except InfeasibleError as exc:
        full = as_turned(st.stock, actions)
        doc.update({"feasible": False, "reason": str(exc), "actions": [],
                    "residual_mm3": round(turnability_test(full, st.tc, np.inf).residual, 6),
                    "residual_bbox": exc.bbox, "total_cost": None, "fixture_changes": 0})
        write_section(full, out / "as_turned")
        write_json(doc, out / "plan.json")
        plot_section(full, out / "as_turned.png", "as turned (infeasible)", overlay=st.tc)
        logger.error("infeasible: %s", exc)
        return EXIT_INFEASIBLE
    best = plans[0]
    doc.update({"feasible": True, **best.to_json(by_id)})
    if len(plans) > 1:
        doc["alternatives"] = [p.to_json(by_id) for p in plans[1:]]
    write_json(doc, out / "plan.json")

    rows, states, cuts, labels = [], [], [], []
    work = st.stock.section
    for i, aid in enumerate(best.action_ids):
        a = by_id[aid]
        cut = work.intersect(a.mtv)
        work = work.difference(a.mtv)
        states.append(work)
        cuts.append(cut)
        labels.append(f"{i + 1}: {aid} {a.tool.name} @ {a.fixture.id}")
        write_section(work, out / f"step_{i + 1:02d}")
        rows.append({"step": i + 1, "id": aid, "tool": a.tool.name, "fixture": a.fixture.id,
                     "step_volume_mm3": f"{best.step_volumes[i]:.6f}",
                     "step_cost": f"{best.step_costs[i]:.6f}",
                     "setup_cost": f"{best.setup_costs[i]:.6f}"})
    write_csv(rows, STEP_COLUMNS, out / "steps.csv")
    plot_plan_strip(st.stock.section, states, cuts, labels, st.tc, out / "plan_strip.png")
    logger.info("plan %s cost %.4f residual %.4f", ",".join(best.action_ids), best.total_cost,
                best.residual)
    return EXIT_OK


# -- demo job ------------------------------------------------------------------

def write_demo(dest: Path) -> Path:
    """Stepped shaft with a facing tool and a grooving tool; returns the job path."""
    import json
    dest.mkdir(parents=True, exist_ok=True)
    mesh = stepped_shaft_mesh([(12.0, 6.0), (8.0, 4.0), (6.0, 2.5)], segments=96)
    save_stl(mesh, dest / "shaft.stl")
    pixel = 0.5
    # insert and holder share one canvas; reference pixel at its bottom-left,
    # holder stem runs out in +x
    for name, width, tip in (("square", 3, 3), ("groove", 1, 4)):
        canvas = np.zeros((width, 40), dtype=bool)
        canvas[:, :tip] = True
        write_pgm(Raster2D((0.0, 0.0), pixel, canvas), dest / f"{name}_insert.pgm")
        write_pgm(Raster2D((0.0, 0.0), pixel, ~canvas), dest / f"{name}_holder.pgm")
    tools = {"schema": TOOLS_SCHEMA_ID, "tools": [
        {"name": "rough", "insert": "square_insert.pgm", "holder": "square_holder.pgm",
         "origin_pixel": [0, 39], "pixel_size": pixel, "cost_rate": 1.0, "feed_rate": 2.0,
         "setup": "right-hand"},
        {"name": "groove", "insert": "groove_insert.pgm", "holder": "groove_holder.pgm",
         "origin_pixel": [0, 39], "pixel_size": pixel, "cost_rate": 1.0, "feed_rate": 0.5,
         "setup": "plunge"},
    ]}
    (dest / "tools.json").write_text(json.dumps(tools, indent=2) + "\n")
    job = {
        "schema": JOB_SCHEMA_ID, "part": "shaft.stl", "voxel_size": pixel,
        "axes": {"n_dirs": 6, "top_k": 2},
        "chuck": {"jaw_count": 3, "jaw_axial_length": 5.0, "grip_radius_range": [2.0, 20.0],
                  "min_contact_length": 3.0, "min_angular_coverage": 0.5, "jaw_height": 3.0,
                  "body": {"radius": 30.0, "length": 10.0}},
        "grips": {"z_step": 5.0, "phi_step": 0.5, "max_fixtures": 2},
        "envelope": {"z_range": [-2.0, 45.0], "x_range": [-40.0, 40.0]},
        "tools": "tools.json",
        "stock": {"radial_allowance": 1.0, "axial_allowance": 1.0},
        "tol": 5.0, "setup_cost": 10.0, "plans": 1, "output_dir": "runs", "seed": 0,
    }
    path = dest / "job.json"
    path.write_text(json.dumps(job, indent=2) + "\n")
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="turnplan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("axes", "rank candidate turning axes"),
                        ("mtv", "maximal turnable volume of one fixture/tool pair"),
                        ("plan", "full pipeline: fixtures, actions, plan search")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", type=Path, default=None,
                        help="base output directory (default: the job's output_dir)")
        sp.add_argument("--unit-scale", type=float, default=None,
                        help="mm per STL unit, overriding the job's unit_scale")
        if name == "mtv":
            sp.add_argument("--fixture", required=True)
            sp.add_argument("--tool", required=True)
    demo = sub.add_parser("demo", help="write a sample stepped-shaft job")
    demo.add_argument("dest", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "demo":
        print(write_demo(args.dest))
        return EXIT_OK
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        job = load_job(args.config, args.unit_scale)
        out = run_dir(job, args.out)
        if args.command == "axes":
            cmd_axes(job, out, args.workers)
            code = EXIT_OK
        elif args.command == "mtv":
            cmd_mtv(job, out, args.fixture, args.tool, args.workers)
            code = EXIT_OK
        else:
            code = cmd_plan(job, out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TurnplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
