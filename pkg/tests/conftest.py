import numpy as np
import pytest

from bmlesion.geometry import BBox


@pytest.fixture
def rng():
    return np.random.default_rng(20200929)


def random_box(rng, w, h, min_size=1.0, integer=False):
    """Box with both extents >= min_size lying mostly inside a w x h frame."""
    if integer:
        x1 = int(rng.integers(0, max(1, w - int(min_size))))
        y1 = int(rng.integers(0, max(1, h - int(min_size))))
        x2 = int(rng.integers(x1 + int(min_size), w + 1))
        y2 = int(rng.integers(y1 + int(min_size), h + 1))
        return BBox(x1, y1, x2, y2)
    x1 = rng.uniform(-2.0, w - min_size)
    y1 = rng.uniform(-2.0, h - min_size)
    x2 = rng.uniform(x1 + min_size, w + 2.0)
    y2 = rng.uniform(y1 + min_size, h + 2.0)
    return BBox(x1, y1, x2, y2)


def run_cli_pipeline(root, n_images=20, size=128, jobs=1, config=None):
    """synth -> gen-maps -> label-anchors -> roi-targets -> synth-batch -> loss -> eval; returns output dir."""
    from bmlesion.cli import main

    root.mkdir(parents=True, exist_ok=True)
    cfg = ["--config", str(config)] if config else []
    jb = ["--jobs", str(jobs)]
    ann = str(root / "annotations.jsonl")
    steps = [
        ["synth", "--out", str(root), "--images", str(n_images), "--size", str(size), "--seed", "5"],
        ["gen-maps", "--annotations", ann, "--out", str(root / "maps"), "--render", *cfg, *jb],
        ["label-anchors", "--annotations", ann, "--out", str(root / "labels.csv"), *cfg, *jb],
        ["roi-targets", "--annotations", ann, "--rois", str(root / "rois.csv"), "--out", str(root / "roi"), *cfg, *jb],
        ["synth-batch", "--labels", str(root / "labels.csv"), "--roi-dir", str(root / "roi"),
         "--out", str(root / "batch"), *cfg],
        ["loss", "--inputs", str(root / "batch"), "--out", str(root / "report.txt"), *cfg],
        ["eval", "--annotations", ann, "--predictions", str(root / "predictions.csv"),
         "--out", str(root / "eval"), *cfg],
    ]
    for args in steps:
        assert main(args) == 0, args
    return root


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


ACCEPTANCE_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line: call with (label, passed, detail)."""

    def record(label, passed, detail=""):
        ACCEPTANCE_RESULTS.append((label, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
