import csv
import json
import math
import shutil

import pytest

from turnplan.cli import main, write_demo
from turnplan.config import TOOLS_SCHEMA_ID, load_job
from turnplan.errors import ConfigError
from turnplan.solids import box_mesh, cylinder_mesh, save_stl


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    return write_demo(tmp_path_factory.mktemp("demo"))


def variant(src_job, dest, **changes):
    """Copy the demo job directory and patch top-level job fields."""
    shutil.copytree(src_job.parent, dest)
    path = dest / "job.json"
    doc = json.loads(path.read_text())
    for key, value in changes.items():
        if value is None:
            doc.pop(key, None)
        else:
            doc[key] = value
    path.write_text(json.dumps(doc))
    return path


def run(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out.strip(), err


def test_demo_plan_feasible(demo, tmp_path, capsys):
    code, out, _ = run(["plan", "--config", demo, "--out", tmp_path], capsys)
    assert code == 0
    plan = json.loads((tmp_path / out.split("/")[-1] / "plan.json").read_text())
    assert plan["feasible"] is True
    assert plan["residual_mm3"] <= json.loads(demo.read_text())["tol"]
    assert plan["actions"] and plan["total_cost"] > 0
    assert plan["gamma"] == pytest.approx(1.0, abs=0.05)
    run_dir = tmp_path / out.split("/")[-1]
    with open(run_dir / "steps.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["id"] for r in rows] == [a["id"] for a in plan["actions"]]
    assert math.fsum(float(r["step_cost"]) + float(r["setup_cost"]) for r in rows) == \
        pytest.approx(plan["total_cost"], rel=1e-6)
    for name in ("tc.pgm", "tc.hdr", "stock.pgm", "step_01.pgm", "plan_strip.png"):
        assert (run_dir / name).is_file()


def test_no_tools_is_infeasible(demo, tmp_path, capsys):
    job = variant(demo, tmp_path / "job")
    (job.parent / "tools.json").write_text(json.dumps({"schema": TOOLS_SCHEMA_ID, "tools": []}))
    code, out, _ = run(["plan", "--config", job, "--out", tmp_path / "runs"], capsys)
    assert code == 2
    plan = json.loads((tmp_path / "runs" / out.split("/")[-1] / "plan.json").read_text())
    assert plan["feasible"] is False and plan["residual_mm3"] > 0
    assert set(plan["residual_bbox"]) == {"z", "r"}


def test_schema_violation_names_field(demo, tmp_path, capsys):
    job = variant(demo, tmp_path / "job", voxel_size=-1)
    code, _, err = run(["plan", "--config", job], capsys)
    assert code == 1
    assert "voxel_size" in err


def test_missing_part_file(demo, tmp_path, capsys):
    job = variant(demo, tmp_path / "job", part="nope.stl")
    code, _, err = run(["axes", "--config", job], capsys)
    assert code == 1 and "part" in err


def test_unreadable_json(tmp_path, capsys):
    bad = tmp_path / "job.json"
    bad.write_text("{not json")
    code, _, _ = run(["axes", "--config", bad], capsys)
    assert code == 1


def test_bad_workers(demo, capsys):
    code, _, _ = run(["plan", "--config", demo, "--workers", "0"], capsys)
    assert code == 1


def _part_job(demo, dest, mesh, **changes):
    job = variant(demo, dest, **changes)
    save_stl(mesh, job.parent / "part.stl")
    doc = json.loads(job.read_text())
    doc["part"] = "part.stl"
    job.write_text(json.dumps(doc))
    return job


def test_axes_cylinder_with_user_axis(demo, tmp_path, capsys):
    job = _part_job(demo, tmp_path / "job", cylinder_mesh(2.0, 0.0, 6.0, 96),
                    voxel_size=0.2,
                    axes={"n_dirs": 4, "top_k": 2,
                          "user_axes": [{"point": [0, 0, 0], "direction": [1, 0, 0]}]})
    code, out, _ = run(["axes", "--config", job, "--out", tmp_path / "runs"], capsys)
    assert code == 0
    d = tmp_path / "runs" / out.split("/")[-1]
    doc = json.loads((d / "axes.json").read_text())
    top = doc["candidates"][0]
    assert top["gamma"] == pytest.approx(1.0, abs=0.02)
    assert any(c["provenance"] == "user" for c in doc["candidates"])
    for name in ("axes.csv", "axes.txt", "gamma.png", "tc_00.pgm", "tc_00.hdr"):
        assert (d / name).is_file()


def test_axes_cube(demo, tmp_path, capsys):
    job = _part_job(demo, tmp_path / "job", box_mesh((-1, -1, -1), (1, 1, 1)),
                    voxel_size=0.05, axes={"n_dirs": 6, "top_k": 3})
    code, out, _ = run(["axes", "--config", job, "--out", tmp_path / "runs"], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "runs" / out.split("/")[-1] / "axes.json").read_text())
    assert doc["candidates"][0]["gamma"] == pytest.approx(2 / math.pi, rel=0.03)


def test_mtv_outputs_and_unknown_ids(demo, tmp_path, capsys):
    code, out, _ = run(["mtv", "--config", demo, "--out", tmp_path, "--fixture", "f000",
                        "--tool", "groove"], capsys)
    assert code == 0
    d = tmp_path / out.split("/")[-1]
    doc = json.loads((d / "mtv_f000_groove.json").read_text())
    assert doc["mtv_volume_mm3"] > 0 and doc["removable_volume_mm3"] > 0
    assert (d / "mtv_f000_groove.pgm").is_file() and (d / "mtv_f000_groove.png").is_file()
    code, _, err = run(["mtv", "--config", demo, "--fixture", "f999", "--tool", "groove"],
                       capsys)
    assert code == 1 and "f999" in err
    code, _, err = run(["mtv", "--config", demo, "--fixture", "f000", "--tool", "drill"],
                       capsys)
    assert code == 1 and "drill" in err


def test_mtv_blocked_envelope(demo, tmp_path, capsys):
    # every reachable placement lies inside the part, so nothing can be cut
    job = variant(demo, tmp_path / "job", envelope={"z_range": [10.0, 12.0],
                                                    "x_range": [-1.0, 1.0]})
    code, out, _ = run(["mtv", "--config", job, "--out", tmp_path / "runs", "--fixture", "f000",
                        "--tool", "rough"], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "runs" / out.split("/")[-1] /
                      "mtv_f000_rough.json").read_text())
    assert doc["mtv_volume_mm3"] == 0.0


def test_unit_scale_override(demo, tmp_path):
    base = load_job(demo)
    scaled = load_job(demo, 2.0)
    assert scaled.unit_scale == 2.0
    assert scaled.digest() != base.digest()
    lo, hi = scaled.load_part().occupied_bounds()
    lo0, hi0 = base.load_part().occupied_bounds()
    assert hi[2] - lo[2] == pytest.approx(2 * (hi0[2] - lo0[2]), abs=2 * base.voxel_size)
    with pytest.raises(ConfigError):
        load_job(demo, -1.0)


def test_demo_subcommand(tmp_path, capsys):
    code, out, _ = run(["demo", tmp_path / "d"], capsys)
    assert code == 0 and out.endswith("job.json")
    assert load_job(out).tools
