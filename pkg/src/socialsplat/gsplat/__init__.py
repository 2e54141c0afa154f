"""3D Gaussian splatting: densities, projection, tiled rasterization, gradients."""
from .camera import Camera, load_camera, look_at, save_camera, simple_camera
from .gaussians import (
    Gaussian3D,
    GaussianSet,
    covariance_from_rs,
    evaluate_density,
    quat_to_rotmat,
    rotmat_to_quat,
)
from .imageio import load_scene, read_image, save_scene, scene_set, write_image, write_ppm
from .project import DILATION, Splats, project, project_backward
from .raster import ALPHA_MAX, T_STOP, rasterize, rasterize_backward, rasterize_naive
from .render import (
    ScreenGradStats,
    render,
    render_backward,
    render_image,
    render_splat_tensors,
    render_video,
)


def project_gaussian(g, cam):
    """Project one ``Gaussian3D``; returns a single-row ``Splats`` or None when culled."""
    import numpy as np

    splats, _ = project(g.position[None], g.covariance[None], np.array([g.opacity]),
                        g.color[None], cam)
    return splats if splats.valid[0] else None


__all__ = [
    "ALPHA_MAX", "Camera", "DILATION", "Gaussian3D", "GaussianSet", "ScreenGradStats", "Splats",
    "T_STOP", "covariance_from_rs", "evaluate_density", "load_camera", "load_scene", "look_at",
    "project", "project_backward", "project_gaussian", "quat_to_rotmat", "rasterize",
    "rasterize_backward", "rasterize_naive", "read_image", "render", "render_backward",
    "render_image", "render_splat_tensors", "render_video", "rotmat_to_quat", "save_camera",
    "save_scene", "scene_set", "simple_camera", "write_image", "write_ppm",
]
