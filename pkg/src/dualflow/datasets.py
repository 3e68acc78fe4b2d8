"""Toy data: 2D point clouds, procedural glyph images, and training pairs."""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .noise import NoiseStream

SIDE = 16
CONTENT_NAMES = ("disk", "square", "triangle", "cross")
# style 0 is a flat white-on-black placeholder, not part of the training set
STYLE_NAMES = ("flat", "hstripes", "dstripes", "radial", "checker")
NULL_CONDITION = 0


@dataclass(frozen=True)
class ToyDistribution:
    kind: str
    params: dict = field(default_factory=dict)
    dim: int = 2

    def __post_init__(self):
        if self.kind not in ("gaussian", "two_moons", "ring"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")


def gaussian(mu=0.0, sigma=1.0):
    return ToyDistribution("gaussian", {"mu": float(mu), "sigma": float(sigma)})


def two_moons(noise=0.05):
    return ToyDistribution("two_moons", {"noise": float(noise)})


def ring(radius=1.0, width=0.05):
    return ToyDistribution("ring", {"radius": float(radius), "width": float(width)})


def sample_2d(dist, n, seed):
    """Draw ``n`` points of ``dist`` as an ``(n, 2)`` array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    stream = NoiseStream(seed)
    p = dist.params
    if dist.kind == "gaussian":
        if p["sigma"] <= 0:
            raise ValueError("sigma must be positive")
        return p["mu"] + p["sigma"] * stream.normal(0, (n, 2), label="gaussian")
    if dist.kind == "two_moons":
        w = p["noise"]
        if w < 0:
            raise ValueError("noise width must be non-negative")
        theta = np.pi * stream.uniform(0, n, label="moons.theta")
        lower = stream.uniform(1, n, label="moons.which") < 0.5
        pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        pts[lower] = np.stack([1.0 - np.cos(theta[lower]),
                               0.5 - np.sin(theta[lower])], axis=1)
        jitter = w * stream.normal(2, (n, 2), label="moons.noise")
        # keep every point inside the arcs' envelope of 4 noise widths
        norm = np.linalg.norm(jitter, axis=1, keepdims=True)
        jitter *= np.minimum(1.0, 4.0 * w / np.maximum(norm, 1e-300))
        return pts + jitter
    radius, width = p["radius"], p["width"]
    if radius <= 0 or width < 0:
        raise ValueError("ring needs radius > 0 and width >= 0")
    angle = 2.0 * np.pi * stream.uniform(0, n, label="ring.angle")
    r = radius + width * np.clip(stream.normal(1, n, label="ring.radius"), -4.0, 4.0)
    return np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)


def moons_arc_distance(points):
    """Distance from each point to the nearer of the two noiseless moon arcs."""
    pts = np.asarray(points, dtype=float)
    upper = _arc_distance(pts, center=(0.0, 0.0), sign=1.0)
    lower = _arc_distance(pts, center=(1.0, 0.5), sign=-1.0)
    return np.minimum(upper, lower)


def _arc_distance(pts, center, sign):
    # half circle of radius 1 around center; upper half for sign=+1
    rel = pts - np.asarray(center)
    r = np.linalg.norm(rel, axis=1)
    on_side = sign * rel[:, 1] >= 0
    radial = np.abs(r - 1.0)
    ends = np.stack([np.asarray(center) + [1.0, 0.0], np.asarray(center) + [-1.0, 0.0]])
    endpoint = np.min(np.linalg.norm(pts[:, None, :] - ends[None], axis=2), axis=1)
    return np.where(on_side, radial, endpoint)


# -- glyphs ---------------------------------------------------------------

@dataclass(frozen=True)
class GlyphImage:
    pixels: np.ndarray
    content_id: int
    style_id: int
    side: int = SIDE

    @property
    def flat(self):
        return self.pixels.reshape(-1)


def _grid():
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(float)
    return yy, xx, xx + 0.5 - SIDE / 2, yy + 0.5 - SIDE / 2


def content_mask(content_id):
    _, _, cx, cy = _grid()
    if content_id == 0:
        m = cx ** 2 + cy ** 2 <= 5.5 ** 2
    elif content_id == 1:
        m = (np.abs(cx) <= 5) & (np.abs(cy) <= 5)
    elif content_id == 2:
        half = (cy + 5.5) / 11.0 * 6.0
        m = (cy >= -5.5) & (cy <= 5.5) & (np.abs(cx) <= half)
    elif content_id == 3:
        m = ((np.abs(cx) <= 2) & (np.abs(cy) <= 6)) | ((np.abs(cy) <= 2) & (np.abs(cx) <= 6))
    else:
        raise KeyError(f"unknown content id {content_id}")
    return m.astype(float)


def style_layers(style_id):
    """Foreground and background textures for one style, each ``(16, 16)``."""
    yy, xx, cx, cy = _grid()
    if style_id == 0:
        return np.ones((SIDE, SIDE)), np.zeros((SIDE, SIDE))
    if style_id == 1:
        lo, hi = 0.3, 0.9
        fg = np.where((yy // 2) % 2 == 0, hi, lo)
        bg = np.full((SIDE, SIDE), 0.1)
    elif style_id == 2:
        lo, hi = 0.2, 0.8
        fg = np.where(((xx + yy) // 3) % 2 == 0, hi, lo)
        bg = np.where(((xx + yy) // 3) % 2 == 0, 0.15, 0.05)
    elif style_id == 3:
        lo, hi = 0.4, 1.0
        r = np.sqrt(cx ** 2 + cy ** 2)
        fg = hi - (hi - lo) * np.clip(r / 6.0, 0.0, 1.0)
        bg = 0.25 * np.clip(r / 11.0, 0.0, 1.0)
    elif style_id == 4:
        lo, hi = 0.3, 0.9
        fg = np.where(((xx // 2) + (yy // 2)) % 2 == 0, hi, lo)
        bg = np.full((SIDE, SIDE), 0.1)
    else:
        raise KeyError(f"unknown style id {style_id}")
    return fg, bg


def render_glyph(content_id, style_id):
    mask = content_mask(content_id)
    fg, bg = style_layers(style_id)
    pixels = mask * fg + (1.0 - mask) * bg
    if style_id != 0:
        # even 8-bit codes: the mean of two glyphs is a whole code, so it never
        # sits on a rounding tie when written as PGM
        pixels = 2.0 * np.rint(pixels * 127.0) / 255.0
    return GlyphImage(pixels, int(content_id), int(style_id))


def content_condition(content_id):
    if not 0 <= content_id < len(CONTENT_NAMES):
        raise KeyError(f"unknown content id {content_id}")
    return 1 + content_id


def style_condition(style_id):
    if not 1 <= style_id < len(STYLE_NAMES):
        raise KeyError(f"style {style_id} has no condition label")
    return 4 + style_id


def target_condition(content_id, style_id):
    """Composite label for "shape ``content_id`` in style ``style_id``" (9..24)."""
    content_condition(content_id)
    style_condition(style_id)
    return 9 + 4 * content_id + (style_id - 1)


N_GLYPH_CONDITIONS = 25


def glyph_training_set():
    """All trainable renders with their four condition labels.

    Returns ``(images, labels)`` where ``images`` is ``(16, 256)`` and
    ``labels`` is ``(16, 4)`` holding (null, content, style, target) ids.
    """
    images, labels = [], []
    for c in range(len(CONTENT_NAMES)):
        for s in range(1, len(STYLE_NAMES)):
            images.append(render_glyph(c, s).flat)
            labels.append((NULL_CONDITION, content_condition(c), style_condition(s),
                           target_condition(c, s)))
    return np.array(images), np.array(labels, dtype=np.int64)


def glyph_samples(n, seed, null_fraction=0.1):
    """``n`` glyph states with one randomly chosen label role each."""
    images, labels = glyph_training_set()
    stream = NoiseStream(seed)
    idx = stream.integers(0, n, len(images), label="glyph.pick")
    role = 1 + stream.integers(1, n, 3, label="glyph.role")
    role = np.where(stream.uniform(2, n, label="glyph.null") < null_fraction, 0, role)
    return images[idx], labels[idx, role]


# -- training pairs -------------------------------------------------------

@dataclass(frozen=True)
class PairSet:
    x0: np.ndarray
    x1: np.ndarray
    cond: np.ndarray

    def __len__(self):
        return len(self.x1)


def make_pairs(x1, cond, seed):
    """Couple each data state with an independent standard-normal noise state."""
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    if len(x1) == 0:
        raise ValueError("dataset is empty")
    cond = np.broadcast_to(np.asarray(cond, dtype=np.int64), (len(x1),)).copy()
    x0 = NoiseStream(seed).normal(0, x1.shape, label="pairs.x0")
    return PairSet(x0, x1, cond)


# -- PGM I/O --------------------------------------------------------------

def quantize(pixels):
    """Round-half-even to 8 bits after clipping to [0, 1]."""
    return np.rint(np.clip(np.asarray(pixels, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, pixels, side=SIDE):
    data = quantize(np.asarray(pixels).reshape(side, side))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"P5\n%d %d\n255\n" % (side, side) + data.tobytes())
    return path


def read_pgm(path):
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: expected binary PGM with maxval 255")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8)
    if data.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(float) / 255.0


def dump_catalog(out_dir):
    paths = []
    for c in range(len(CONTENT_NAMES)):
        for s in range(len(STYLE_NAMES)):
            paths.append(write_pgm(Path(out_dir) / f"glyph_c{c}_s{s}.pgm",
                                   render_glyph(c, s).pixels))
    return paths
