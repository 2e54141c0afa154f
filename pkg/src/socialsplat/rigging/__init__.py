"""Binding Gaussians to a deforming triangle mesh."""
from .blendshape import (DEFAULT_GROUPS, BlendshapeRig, axis_angle_to_rotmat, blendshape_apply,
                         load_basis, save_basis)
from .bound import BoundGaussianSet, init_anchors, load_bound_set, save_bound_set, to_deformable
from .densify import DensifyResult, DensifyThresholds, densify
from .frames import BindingFrame, BindingFrames, compute_binding_frames
from .mesh import TriangleMesh, flipped_adjacencies, grid_mesh, load_obj, save_obj
