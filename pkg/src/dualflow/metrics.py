"""Content/style losses over a patch-statistics extractor, and energy distance.

The extractor stands in for a pretrained perceptual network: level ``k``
average-pools the image into ``cell x cell`` blocks and keeps two channels,
the block mean and the block standard deviation. Level 1 is the raw image.
"""
import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .datasets import SIDE


@dataclass(frozen=True)
class FeatureExtractor:
    cells: tuple = (1, 2, 4, 8)
    side: int = SIDE

    def __post_init__(self):
        if len(self.cells) < 2:
            raise ValueError("the extractor needs at least two levels")
        if any(self.side % c for c in self.cells):
            raise ValueError("every cell size must divide the image side")

    @property
    def n_levels(self):
        return len(self.cells)

    def _images(self, x):
        x = np.asarray(x, dtype=float)
        if x.size != self.side * self.side:
            raise ValueError(f"expected {self.side}x{self.side} image, got {x.shape}")
        return x.reshape(1, self.side, self.side)

    def features(self, x):
        """List of ``(2, h, w)`` feature maps, shallowest first."""
        imgs = self._images(x)
        out = []
        for cell in self.cells:
            means, stds = kernels.block_stats(imgs, cell)
            out.append(np.stack([means[0], stds[0]]))
        return out


def _check_pair(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size != b.size:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def content_loss(extractor, stylized, content):
    """L2 distance between the deepest-level feature maps."""
    a, b = _check_pair(stylized, content)
    return float(np.linalg.norm(extractor.features(a)[-1] - extractor.features(b)[-1]))


def style_loss(extractor, stylized, style):
    """Level-averaged distance of per-channel feature means plus variances."""
    a, b = _check_pair(stylized, style)
    total = 0.0
    for fa, fb in zip(extractor.features(a), extractor.features(b)):
        mu_a, mu_b = fa.mean(axis=(1, 2)), fb.mean(axis=(1, 2))
        var_a, var_b = fa.var(axis=(1, 2)), fb.var(axis=(1, 2))
        total += np.linalg.norm(mu_a - mu_b) + np.linalg.norm(var_a - var_b)
    return float(total / extractor.n_levels)


def energy_distance(a, b):
    """``2 E|a-b| - E|a-a'| - E|b-b'|`` with exact double sums (V-statistics)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    if len(a) == 0 or len(b) == 0:
        raise ValueError("energy distance needs non-empty samples")
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples must share one dimension")
    mpd = kernels.mean_pairwise_distance
    return 2.0 * mpd(a, b) - mpd(a, a) - mpd(b, b)


def artfid(lpips, fid):
    """Combinator only; both inputs need pretrained networks and are not computed here."""
    return (1.0 + lpips) * (1.0 + fid)


@dataclass
class MetricsReport:
    content_loss: float
    style_loss: float
    l2_to_content: float
    l2_to_style: float
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def report(stylized, content, style, extractor=None, **meta):
    ex = extractor or FeatureExtractor()
    s, c, y = (np.asarray(v, dtype=float).reshape(-1) for v in (stylized, content, style))
    return MetricsReport(content_loss(ex, s, c), style_loss(ex, s, y),
                         float(np.linalg.norm(s - c)), float(np.linalg.norm(s - y)), meta)


def write_summary_csv(path, rows):
    """Batch summary: one row per run, metrics columns plus flattened meta."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = []
    for name, rep in rows:
        d = {"run": name, **{k: v for k, v in rep.to_dict().items() if k != "meta"}}
        d.update({k: v for k, v in rep.meta.items()})
        flat.append(d)
    keys = list(dict.fromkeys(k for d in flat for k in d))
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for d in flat:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in d.items()})
    return path
