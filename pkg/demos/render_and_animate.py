"""Build a mesh-bound Gaussian avatar, drive it with a jaw/expression sweep,
and write the frames as PPM images.

    python3 demos/render_and_animate.py out_dir
"""
import os
import sys

import numpy as np

from socialsplat.gsplat import write_image
from socialsplat.synthetic import default_camera, make_avatar, make_rig, render_avatar


def main(out="demo_frames", n=12):
    os.makedirs(out, exist_ok=True)
    rig = make_rig()
    avatar = make_avatar(rig.base)
    cam = default_camera(96, 96)
    face = rig.groups["EXP"] + rig.groups["JAW"]
    for k in range(n):
        params = np.zeros(rig.n_params)
        params[:face] = 0.8 * np.sin(2 * np.pi * k / n)
        img = render_avatar(avatar, rig, params, cam, background=(1.0, 1.0, 1.0))
        path = os.path.join(out, f"frame_{k:03d}.ppm")
        write_image(path, img)
        print(path, f"mean intensity {img.mean():.3f}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
