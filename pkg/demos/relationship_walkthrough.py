"""Train a small listener-motion model on synthetic dyadic data and show that
the relationship label changes what it generates.

Runs in a few minutes on one CPU core:

    python3 demos/relationship_walkthrough.py
"""
import numpy as np

from socialsplat.social import SocialRelationship
from socialsplat.synthetic import SMALL_GROUPS, make_dyadic_dataset, make_rig
from socialsplat.training import RunConfig, run_stage1

MODEL = {"d_audio": 16, "groups": SMALL_GROUPS, "d_model": 32, "n_heads": 4, "n_layers": 1, "d_s": 8, "d_q": 16}


def main(steps=600):
    ds, task = make_dyadic_dataset(n_per_class=10, t=24, rig=make_rig())
    cfg = RunConfig.from_dict({"seed": 0, "model": MODEL,
                               "stage": {"stage": 1, "steps": steps, "batch_size": 8, "window": 24,
                                         "lr_network": 2e-3}})

    def progress(step, row):
        if step % 100 == 0:
            print(f"step {step:4d}  motion loss {row['mesh_term']:.4f}")

    model, _ = run_stage1(cfg, ds, callback=progress)

    clip = ds.clips[0]
    print(f"\nclip {clip.id}, true relationship {clip.relationship}")
    for rel in SocialRelationship.all():
        out = model.generate(clip.audio_A, clip.audio_B, clip.motion_A, rel).frames
        target = task.target(clip.audio_B.frames, clip.motion_A.frames, rel)
        print(f"  {str(rel):24s} mean |motion| {np.abs(out).mean():.3f}   target {np.abs(target).mean():.3f}"
              f"   mse {np.mean((out - target) ** 2):.4f}")


if __name__ == "__main__":
    main()
