from pathlib import Path

import numpy as np
import pytest

from slideselect.container import GridMeta
from slideselect.captions import KeywordQuery
from slideselect.container import read_captions

FIXTURES = Path(__file__).parent / "fixtures"

# with/without synonym groups used throughout: breast metastases and
# arrow-highlighted mitotic figure searches
BREAST_QUERY = KeywordQuery(
    with_groups=[
        ["breast"],
        ["tumor", "cancer", "carcinoma", "metastases", "metastasis", "metastatic"],
    ],
    without_groups=[
        ["IHC", "immunohistochemical", "immunohistochemistry", "immunostain"],
        ["photomicrograph", "photomicrography"],
    ],
)
MITOTIC_QUERY = KeywordQuery(
    with_groups=[["arrow", "arrowhead", "circle"], ["mitotic", "mitoses"]],
)

BREAST_EXPECTED = ["c01", "c04", "c11"]
MITOTIC_EXPECTED = ["c07", "c09", "c11", "c12"]


@pytest.fixture
def corpus12():
    return read_captions(FIXTURES / "captions12.jsonl")


def make_meta(wsi_id="wsi", grid_h=8, grid_w=8, stride_px=256, patch_px=256, mpp=0.25):
    return GridMeta(
        wsi_id=wsi_id, grid_h=grid_h, grid_w=grid_w, stride_px=stride_px,
        patch_px=patch_px, mpp=mpp,
        level0_h=grid_h * stride_px, level0_w=grid_w * stride_px,
    )


def dyadic_map(rng, h, w):
    """Random map with values k/1024: sums are exact in float64, so the
    summed-area table and direct summation agree bit for bit."""
    return rng.integers(0, 1025, size=(h, w)).astype(np.float64) / 1024.0
