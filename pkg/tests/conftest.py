import numpy as np
import pytest

from stbf.raster import Raster, RasterStack


def random_raster(rng, width, height, bands, lo=0.0, hi=100.0, date_tag=""):
    samples = rng.uniform(lo, hi, size=(bands, height, width))
    return Raster(samples=samples, date_tag=date_tag)


def random_stack(rng, width, height, bands, dates, lo=0.0, hi=100.0):
    rasters = tuple(
        random_raster(rng, width, height, bands, lo, hi, date_tag=f"d{i}")
        for i in range(dates)
    )
    return RasterStack(rasters=rasters)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
