"""Image files (binary PPM, optional PNG) and JSON scene documents."""
from __future__ import annotations

import json

import numpy as np

from ..errors import FormatError
from .gaussians import Gaussian3D, GaussianSet


def to_uint8(image):
    return np.round(np.clip(np.asarray(image), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, image):
    img = to_uint8(image)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path):
    """Read a P6 file into a float image in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header", path=path, offset=pos)
        tokens.append(raw[start:pos])
    if tokens[0] != b"P6":
        raise FormatError(f"expected P6 magic, got {tokens[0]!r}", path=path, offset=0)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("bad PPM header numbers", path=path, offset=pos) from exc
    pos += 1
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=pos) if len(raw) - pos >= w * h * 3 else None
    if data is None:
        raise FormatError(f"PPM payload shorter than {w * h * 3} bytes", path=path, offset=len(raw))
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def write_png(path, image):
    from PIL import Image

    Image.fromarray(to_uint8(image), mode="RGB").save(path)


def write_image(path, image):
    if str(path).lower().endswith(".png"):
        write_png(path, image)
    else:
        write_ppm(path, image)


def read_image(path):
    if str(path).lower().endswith(".png"):
        from PIL import Image

        return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return read_ppm(path)


# scene documents ------------------------------------------------------------
#   {"background": [r, g, b],
#    "gaussians": [{"position": [3], "rotation": [w, x, y, z], "log_scale": [3],
#                   "opacity_logit": float, "color": [3]}, ...]}

_G_KEYS = {"position", "rotation", "log_scale", "opacity_logit", "color"}


def scene_to_dict(gaussians, background=(0.0, 0.0, 0.0)):
    items = gaussians.to_list() if isinstance(gaussians, GaussianSet) else list(gaussians)
    return {"background": [float(v) for v in background],
            "gaussians": [{"position": g.position.tolist(), "rotation": g.rotation.tolist(),
                           "log_scale": g.log_scale.tolist(),
                           "opacity_logit": float(g.opacity_logit), "color": g.color.tolist()}
                          for g in items]}


def save_scene(path, gaussians, background=(0.0, 0.0, 0.0)):
    with open(path, "w") as fh:
        json.dump(scene_to_dict(gaussians, background), fh, indent=1)


def load_scene(path):
    """Returns (list of Gaussian3D, background)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8", errors="replace")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path=path, offset=len(text[:exc.pos].encode())) from exc
    if not isinstance(doc, dict) or "gaussians" not in doc:
        raise FormatError("scene must be an object with a 'gaussians' list", path=path, offset=0)
    unknown = set(doc) - {"gaussians", "background"}
    if unknown:
        raise FormatError(f"unknown scene keys {sorted(unknown)}", path=path, offset=0)
    out = []
    for i, item in enumerate(doc["gaussians"]):
        if set(item) != _G_KEYS:
            raise FormatError(f"gaussian {i} keys {sorted(item)} != {sorted(_G_KEYS)}", path=path)
        g = Gaussian3D(item["position"], item["rotation"], item["log_scale"],
                       float(item["opacity_logit"]), item["color"])
        if g.position.shape != (3,) or g.rotation.shape != (4,) or g.log_scale.shape != (3,) \
                or g.color.shape != (3,):
            raise FormatError(f"gaussian {i} has wrongly sized fields", path=path)
        out.append(g)
    background = np.asarray(doc.get("background", [0.0, 0.0, 0.0]), dtype=np.float64)
    return out, background


def scene_set(gaussians, requires_grad=False):
    if not gaussians:
        return GaussianSet(*(np.zeros((0,) + s) for s in ((3,), (4,), (3,), (), (3,))))
    return GaussianSet.from_list(gaussians, requires_grad)
