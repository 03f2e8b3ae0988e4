from .deformed import CharacterFields, InterpolationScene, query_deformed
from .grid import (
    SENTINEL,
    SdfGrid,
    VoxelGrid,
    cap_holes,
    grid_layout,
    part_sdf,
    read_sdf_cache,
    sample_sdf,
    signed_distance_transform,
    voxelize_part,
    write_sdf_cache,
)
from .interp import bbox_map, interp_sdf_value, interp_sdf_values, union_over_bones, union_sdf
from .rbf import RbfInterpolator, advect_query, build_rbf
from .surface import extract_surface

__all__ = [
    "CharacterFields", "InterpolationScene", "query_deformed", "SENTINEL", "SdfGrid", "VoxelGrid",
    "cap_holes", "grid_layout", "part_sdf", "read_sdf_cache", "sample_sdf", "signed_distance_transform",
    "voxelize_part", "write_sdf_cache", "bbox_map", "interp_sdf_value", "interp_sdf_values",
    "union_over_bones", "union_sdf", "RbfInterpolator", "advect_query", "build_rbf", "extract_surface",
]
