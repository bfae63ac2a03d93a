import pytest

from app.core.errors import (
    AppError,
    ConfigurationError,
    CoverageError,
    InsufficientSignalError,
    NotFoundError,
    StatisticsError,
    SynchronizationError,
    ValidationError,
    WavFormatError,
)


@pytest.mark.parametrize(
    "error_cls, category, exit_code, code",
    [
        (ValidationError, "validation", 2, 400),
        (NotFoundError, "not_found", 3, 404),
        (ConfigurationError, "configuration", 4, 422),
        (CoverageError, "coverage", 5, 460),
        (InsufficientSignalError, "insufficient_signal", 6, 461),
        (SynchronizationError, "synchronization", 7, 462),
        (StatisticsError, "statistics", 8, 463),
    ],
)
def test_error_categories(error_cls, category, exit_code, code):
    error = error_cls("出错了", detail={"x": 1})
    assert isinstance(error, AppError)
    assert error.exit_code == exit_code
    assert error.to_dict() == {"error": category, "code": code, "message": "出错了", "detail": {"x": 1}}


def test_wav_format_error_carries_offset():
    error = WavFormatError("data块被截断", offset=36, detail={"expected": 100, "actual": 40})
    assert error.offset == 36
    assert error.to_dict()["detail"] == {"offset": 36, "expected": 100, "actual": 40}
    assert error.exit_code == 9


def test_default_messages_are_distinct():
    messages = {cls().error_msg for cls in (ValidationError, NotFoundError, ConfigurationError, CoverageError)}
    assert len(messages) == 4
