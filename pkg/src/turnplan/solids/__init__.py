"""Geometry kernel: meshes, voxel grids, rigid motions and 2D raster morphology."""
from .grid import (Axis, RigidTransform, VoxelGrid, box_grid, grid_boolean,
                   grid_frame_for_bounds, transform_solid, voxelize, write_vtk)
from .mesh import (TriangleMesh, annulus_mesh, box_mesh, cylinder_mesh, load_mesh, mesh_from_soup,
                   revolve_profile_mesh, save_stl, sphere_mesh, stepped_shaft_mesh)
from .raster import (Raster2D, dilate2d, raster_from_box, raster_from_pgm, read_pgm,
                     reflect2d, union_all, within_band, write_pgm)

__all__ = [
    "Axis", "RigidTransform", "annulus_mesh", "VoxelGrid", "box_grid", "grid_boolean", "grid_frame_for_bounds",
    "transform_solid", "voxelize", "write_vtk", "TriangleMesh", "box_mesh", "cylinder_mesh",
    "load_mesh", "mesh_from_soup", "revolve_profile_mesh", "save_stl", "sphere_mesh",
    "stepped_shaft_mesh", "Raster2D", "dilate2d", "raster_from_box", "raster_from_pgm",
    "read_pgm", "reflect2d", "union_all", "within_band", "write_pgm",
]
