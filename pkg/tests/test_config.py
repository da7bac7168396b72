import pytest

from bmlesion.config import ToolConfig, dump_config, load_config, parse_config
from bmlesion.errors import ConfigError


def test_defaults():
    cfg = ToolConfig()
    assert cfg.iou_max == 0.5 and cfg.iou_min == 0.3
    assert cfg.roi_out_size == 128
    assert cfg.fppi_targets == (0.5, 1.0, 2.0, 3.0, 4.0)
    assert cfg.windows == ((50, 449), (-505, 1980), (446, 1960))
    assert cfg.anchor_spec().stride == 8
    assert load_config(None) == cfg


def test_parse_all_keys():
    text = """
    # comment
    stride = 4
    scales = 16, 32
    ratios = 1
    iou_min = 0.2
    iou_max = 0.6
    force_positive = yes
    bm_variant = gaussian
    roi_out_size = 64
    fppi_targets = 1, 2
    match_iou = 0.4
    windows = -100:300, 0:80
    bm_loss_reduction = sum
    batch_size = 128
    positive_fraction = 0.25
    seed = 7
    """
    cfg = parse_config(text)
    assert cfg.scales == (16.0, 32.0) and cfg.ratios == (1.0,)
    assert cfg.force_positive is True
    assert cfg.windows == ((-100.0, 300.0), (0.0, 80.0))
    assert cfg.thresholds().iou_max == 0.6
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize(
    "text",
    [
        "colour = red",
        "stride = 0",
        "iou_min = 0.6\niou_max = 0.5",
        "bm_variant = cubic",
        "windows = 10:5",
        "windows = 10",
        "stride = 8\nstride = 4",
        "just words",
        "force_positive = maybe",
        "fppi_targets = 0",
        "positive_fraction = 1",
    ],
)
def test_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_from_file(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("iou_max = 0.7\n")
    assert load_config(p).iou_max == 0.7
