"""
Tests for SVG overlays
"""
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from markermatch.models import AffineTransform, Configuration, MarkerOutcome, MarkerQC, QCReport
from markermatch.services.alignment import AlignmentService
from markermatch.services.overlay import emit_overlay, render_overlay, render_qc_overlay

SVG = "{http://www.w3.org/2000/svg}"


def _lines(svg_text):
    root = ET.fromstring(svg_text.split("\n", 2)[2])
    return root, root.findall(f".//{SVG}line")


@pytest.fixture
def aligned(make_pair, run_config, settings):
    mu, x = make_pair(seed=9, noise_sd=0.5).configurations()
    return AlignmentService(settings).align(mu, x, run_config)


def test_svg_version_and_groups(aligned):
    """Test an SVG 1.1 document with the three layers"""
    text = render_overlay(aligned.report, aligned.mu, aligned.x)
    assert '"-//W3C//DTD SVG 1.1//EN"' in text
    root, _ = _lines(text)
    assert root.get("version") == "1.1"
    groups = [g.get("id") for g in root.findall(f"{SVG}g")]
    assert groups == ["x-spots", "mu-spots", "matches"]


def test_one_line_per_match(aligned):
    """Test every matched x spot gets exactly one line"""
    _, lines = _lines(render_overlay(aligned.report, aligned.mu, aligned.x))
    assert len(lines) == aligned.report.n_matched > 0


def test_no_lines_without_matches(aligned):
    """Test an all-unmatched report draws no match lines"""
    matches = [m.model_copy(update={"mu_spot_id": None}) for m in aligned.report.matches]
    report = aligned.report.model_copy(update={"matches": matches, "n_matched": 0})
    _, lines = _lines(render_overlay(report, aligned.mu, aligned.x))
    assert lines == []


def test_line_endpoints(aligned):
    """Test lines run from the x spot to the transformed mu spot"""
    report, mu, x = aligned.report, aligned.mu, aligned.x
    transform = AffineTransform(A=report.transform.A, b=report.transform.b)
    mu_t = transform.apply(mu.points)
    x_index = {spot_id: j for j, spot_id in enumerate(x.ids())}
    mu_index = {spot_id: i for i, spot_id in enumerate(mu.ids())}
    matched = [m for m in report.matches if m.mu_spot_id is not None]

    _, lines = _lines(render_overlay(report, mu, x))
    for match, line in zip(matched, lines):
        start = x.points[x_index[match.x_spot_id]]
        end = mu_t[mu_index[match.mu_spot_id]]
        assert float(line.get("x1")) == pytest.approx(start[0], abs=1e-6)
        assert float(line.get("y1")) == pytest.approx(start[1], abs=1e-6)
        assert float(line.get("x2")) == pytest.approx(end[0], abs=1e-6)
        assert float(line.get("y2")) == pytest.approx(end[1], abs=1e-6)


def test_emit_overlay_writes_file(aligned, tmp_path):
    """Test the overlay file is written and parses"""
    path = tmp_path / "overlay.svg"
    emit_overlay(aligned.report, aligned.mu, aligned.x, path)
    assert path.read_text(encoding="utf-8").startswith("<?xml")


def test_qc_overlay_marks_excluded():
    """Test excluded markers are drawn with the excluded class in both panels"""
    mu_m = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0], [50.0, 50.0], [25.0, 25.0]])
    x_m = mu_m.copy()
    x_m[4] += [15.0, 0.0]
    report = QCReport(
        markers=[
            MarkerQC(marker=k, outcome=MarkerOutcome.MATCHED_TO_SELF) for k in range(1, 5)
        ]
        + [MarkerQC(marker=5, outcome=MarkerOutcome.UNMATCHED_IN_X)],
        retained_markers=[1, 2, 3, 4],
    )
    identity = AffineTransform.identity(2)
    text = render_qc_overlay(report, mu_m, x_m, (1, 2, 3, 4, 5), identity, identity)
    _, lines = _lines(text)
    classes = [line.get("class") for line in lines]
    assert classes.count("excluded") == 2
    assert classes.count("match") == 8


def test_single_point_has_positive_viewport(aligned):
    """Test a one-spot overlay still gets a drawable view box"""
    one = Configuration(points=[[5.0, 5.0]], spot_ids=("only",))
    report = aligned.report.model_copy(update={"matches": [], "n_matched": 0})
    root, _ = _lines(render_overlay(report, one, one))
    width = float(root.get("width"))
    assert width > 0
