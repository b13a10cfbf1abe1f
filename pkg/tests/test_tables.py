import math

import pytest

from h2s.errors import ValidationError
from h2s.tables import (
    DEFAULT_TABLES,
    INV_ZETA_ASYMPTOTE,
    CalibrationTables,
    load_tables,
    save_tables,
)


@pytest.mark.parametrize(
    ("n", "expected"),
    [
        pytest.param(2, 1.2733, id="first"),
        pytest.param(1024, 1.4268, id="tabulated"),
        pytest.param(1, 1.2733, id="clamped_low"),
        pytest.param(10_000, 2.4485, id="clamped_high"),
    ],
)
def test_xi_lookup(n: int, expected: float) -> None:
    assert DEFAULT_TABLES.xi_at(n) == pytest.approx(expected)


def test_xi_interpolates_in_log2() -> None:
    # halfway between 16 and 32 in log2 space
    n = 2**4.5
    assert DEFAULT_TABLES.xi_at(n) == pytest.approx(0.5 * (0.8107 + 0.8384))


def test_inv_zeta_asymptote() -> None:
    assert DEFAULT_TABLES.inv_zeta_at(8192) == INV_ZETA_ASYMPTOTE
    assert DEFAULT_TABLES.zeta_at(8192) == pytest.approx(1 / math.sqrt(2))
    assert DEFAULT_TABLES.inv_zeta_at(1) == pytest.approx(0.6673)


def test_rejects_nonpositive_dimension() -> None:
    with pytest.raises(ValidationError):
        DEFAULT_TABLES.xi_at(0)


def test_rejects_invalid_entries() -> None:
    with pytest.raises(ValidationError):
        CalibrationTables({2: -1.0}, {1: 0.5})
    with pytest.raises(ValidationError):
        CalibrationTables({}, {1: 0.5})


def test_save_and_load(tmp_path) -> None:
    path = tmp_path / "tables.json"
    tables = CalibrationTables({2: 1.5, 8: 1.0}, {1: 0.7, 4: 1.1})
    save_tables(tables, path)
    loaded = load_tables(path)
    assert loaded == tables
    assert load_tables(None) is DEFAULT_TABLES


def test_load_missing(tmp_path) -> None:
    with pytest.raises(ValidationError, match="not found"):
        load_tables(tmp_path / "nope.json")


def test_load_malformed(tmp_path) -> None:
    path = tmp_path / "bad.json"
    path.write_text('{"xi": {"2": 1.0}}')
    with pytest.raises(ValidationError, match="malformed"):
        load_tables(path)
