import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from dualflow import datasets as ds
from dualflow.metrics import (FeatureExtractor, MetricsReport, content_loss, energy_distance,
                              report, style_loss, write_summary_csv)

GOLDEN = Path(__file__).parent / "golden"
EX = FeatureExtractor()


def glyph(c, s):
    return ds.render_glyph(c, s).flat


def test_extractor_levels():
    feats = EX.features(glyph(0, 1))
    assert [f.shape for f in feats] == [(2, 16, 16), (2, 8, 8), (2, 4, 4), (2, 2, 2)]
    assert not np.any(feats[0][1])
    with pytest.raises(ValueError):
        FeatureExtractor(cells=(1,))
    with pytest.raises(ValueError):
        FeatureExtractor(cells=(1, 3))


def test_losses_zero_and_symmetric(rng):
    a, b = rng.uniform(size=256), rng.uniform(size=256)
    for loss in (content_loss, style_loss):
        assert loss(EX, a, a) == 0.0
        assert loss(EX, a, b) == loss(EX, b, a) > 0.0
    with pytest.raises(ValueError):
        content_loss(EX, a, np.zeros(10))


def test_content_loss_two_loop_oracle():
    a, b = glyph(0, 1).reshape(16, 16), glyph(1, 1).reshape(16, 16)
    total = 0.0
    for by in range(2):
        for bx in range(2):
            pa = [a[y, x] for y in range(8 * by, 8 * by + 8) for x in range(8 * bx, 8 * bx + 8)]
            pb = [b[y, x] for y in range(8 * by, 8 * by + 8) for x in range(8 * bx, 8 * bx + 8)]
            ma, mb = sum(pa) / 64, sum(pb) / 64
            sa = math.sqrt(sum((p - ma) ** 2 for p in pa) / 64)
            sb = math.sqrt(sum((p - mb) ** 2 for p in pb) / 64)
            total += (ma - mb) ** 2 + (sa - sb) ** 2
    assert content_loss(EX, a, b) == pytest.approx(math.sqrt(total), rel=1e-12)


def test_permutation_within_cells(rng):
    img = glyph(2, 3).reshape(16, 16)
    shuffled = img.copy()
    for by in range(2):
        for bx in range(2):
            block = shuffled[8 * by:8 * by + 8, 8 * bx:8 * bx + 8].ravel()
            shuffled[8 * by:8 * by + 8, 8 * bx:8 * bx + 8] = rng.permutation(block).reshape(8, 8)
    # the deepest level cannot see a shuffle inside its cells
    assert content_loss(EX, img, shuffled) == pytest.approx(0.0, abs=1e-14)
    # raw-level statistics are image-wide, so a global shuffle leaves them alone
    g = rng.permutation(img.ravel())
    fa, fb = EX.features(img)[0], EX.features(g)[0]
    np.testing.assert_allclose(fa.mean(axis=(1, 2)), fb.mean(axis=(1, 2)), atol=1e-15)
    np.testing.assert_allclose(fa.var(axis=(1, 2)), fb.var(axis=(1, 2)), atol=1e-15)


def test_stripes_vs_checker_golden():
    rec = json.loads((GOLDEN / "style_loss.json").read_text())
    (c, s), (c2, s2) = rec["pair"]
    value = style_loss(EX, glyph(c, s), glyph(c2, s2))
    assert value > 0
    assert value == pytest.approx(rec["value"], rel=1e-12)


def mean_abs_normal(mu, var):
    sd = math.sqrt(var)
    return sd * math.sqrt(2 / math.pi) * math.exp(-mu * mu / (2 * var)) + mu * math.erf(mu / (sd * math.sqrt(2)))


def test_energy_distance_gaussian_oracle(rng):
    a, b = rng.normal(0, 1, 1000), rng.normal(3, 1, 1000)
    exact = 2 * mean_abs_normal(3, 2) - 2 * mean_abs_normal(0, 2)
    assert energy_distance(a, b) == pytest.approx(exact, rel=0.10)


def test_energy_distance_properties(rng):
    a, b = rng.normal(size=(40, 2)), rng.normal(size=(30, 2))
    assert energy_distance(a, a) == pytest.approx(0.0, abs=1e-14)
    assert energy_distance(a, rng.permutation(a)) == pytest.approx(0.0, abs=1e-14)
    assert energy_distance(a, b) == pytest.approx(energy_distance(b, a), rel=1e-13)
    assert energy_distance(a, b) > 0
    with pytest.raises(ValueError):
        energy_distance(a[:0], b)
    with pytest.raises(ValueError):
        energy_distance(a, rng.normal(size=(5, 3)))


def test_report_and_summary(tmp_path):
    r = report(glyph(0, 1), glyph(0, 1), glyph(2, 4), method="v2")
    assert r.content_loss == 0.0 and r.style_loss > 0 and r.l2_to_content == 0.0
    assert all(math.isfinite(v) and v >= 0 for v in (r.style_loss, r.l2_to_style))
    path = write_summary_csv(tmp_path / "s.csv", [("a", r), ("b", MetricsReport(1.0, 2.0, 3.0, 4.0))])
    rows = list(csv.DictReader(path.open()))
    assert rows[0]["run"] == "a" and rows[0]["method"] == "v2" and rows[1]["style_loss"] == "2"
