from typing import Any, Optional


class AppError(Exception):
    """
    应用异常基类

    属性:
        error_code: 错误码（HTTP接口中的code字段）
        error_msg: 错误信息
        error_detail: 错误详情
        category: 机器可读的错误类别，CLI以此输出错误
        exit_code: CLI进程退出码
    """
    category = "internal"
    exit_code = 1

    def __init__(
        self,
        error_code: int,
        error_msg: str,
        error_detail: Optional[Any] = None
    ):
        self.error_code = error_code
        self.error_msg = error_msg
        self.error_detail = error_detail
        super().__init__(self.error_msg)

    def to_dict(self) -> dict:
        """转换为机器可读的错误描述"""
        return {
            "error": self.category,
            "code": self.error_code,
            "message": self.error_msg,
            "detail": self.error_detail,
        }


class ValidationError(AppError):
    """参数验证错误"""
    category = "validation"
    exit_code = 2

    def __init__(self, msg: str = "参数验证错误", detail: Any = None):
        super().__init__(error_code=400, error_msg=msg, error_detail=detail)


class NotFoundError(AppError):
    """资源不存在错误"""
    category = "not_found"
    exit_code = 3

    def __init__(self, msg: str = "资源不存在", detail: Any = None):
        super().__init__(error_code=404, error_msg=msg, error_detail=detail)


class ConfigurationError(AppError):
    """配置错误：参数越界、频带超出奈奎斯特频率等"""
    category = "configuration"
    exit_code = 4

    def __init__(self, msg: str = "配置错误", detail: Any = None):
        super().__init__(error_code=422, error_msg=msg, error_detail=detail)


class CoverageError(AppError):
    """数据覆盖错误：分析区间不在主体部分内，或录音窗口未覆盖播放主体"""
    category = "coverage"
    exit_code = 5

    def __init__(self, msg: str = "数据未覆盖分析区间", detail: Any = None):
        super().__init__(error_code=460, error_msg=msg, error_detail=detail)


class InsufficientSignalError(AppError):
    """信号不足：区间内过零点少于2个"""
    category = "insufficient_signal"
    exit_code = 6

    def __init__(self, msg: str = "信号不足", detail: Any = None):
        super().__init__(error_code=461, error_msg=msg, error_detail=detail)


class SynchronizationError(AppError):
    """同步错误：两台录音机的过零点编号无法对齐"""
    category = "synchronization"
    exit_code = 7

    def __init__(self, msg: str = "过零点对齐失败", detail: Any = None):
        super().__init__(error_code=462, error_msg=msg, error_detail=detail)


class StatisticsError(AppError):
    """统计量错误：样本或周期数不足"""
    category = "statistics"
    exit_code = 8

    def __init__(self, msg: str = "统计样本不足", detail: Any = None):
        super().__init__(error_code=463, error_msg=msg, error_detail=detail)


class WavFormatError(AppError):
    """WAV文件格式错误，detail中包含字节偏移"""
    category = "wav_format"
    exit_code = 9

    def __init__(self, msg: str = "WAV格式错误", offset: Optional[int] = None, detail: Any = None):
        info = {"offset": offset}
        if isinstance(detail, dict):
            info.update(detail)
        elif detail is not None:
            info["info"] = detail
        super().__init__(error_code=464, error_msg=msg, error_detail=info)
        self.offset = offset
