import numpy as np
import pytest

from layup.sheet_state import SheetGeometry


@pytest.fixture
def square_geom():
    half = 150.0
    poly = np.array([[half, half], [-half, half], [-half, -half], [half, -half]])
    return SheetGeometry(center=np.zeros(2), polygon=poly, sector_count=8)


@pytest.fixture
def two_sector_geom():
    half = 100.0
    poly = np.array([[half, half], [-half, half], [-half, -half], [half, -half]])
    return SheetGeometry(center=np.zeros(2), polygon=poly, sector_count=2)
