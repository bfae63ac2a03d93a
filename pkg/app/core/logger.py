import sys
import logging
from pathlib import Path
from typing import Optional

from loguru import logger

from app.core.config import config

# 日志格式
log_format = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)


def setup_logging(level: Optional[str] = None, console: Optional[bool] = None):
    """
    (重新)配置日志处理器

    :param level: 日志级别，默认读取log.level
    :param console: 是否输出到控制台（stderr，stdout留给CLI的结果JSON）
    """
    level = (level or config.get("log.level", "INFO")).upper()
    if console is None:
        console = config.get("log.console", True)

    # 移除已有处理器
    logger.remove()

    if console:
        logger.add(
            sys.stderr,
            format=log_format,
            level=level,
            colorize=True,
            backtrace=True,
            diagnose=False,
        )

    if config.get("log.file.enabled", False):
        log_file = config.get("log.file.path", "logs/jitter_{time}.log")
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            log_file,
            rotation=config.get("log.file.max_size", "10MB"),          # 按文件大小切割
            retention=int(config.get("log.file.backup_count", 5)),    # 保留文件数量
            level=level,
            format=log_format,
            encoding="utf-8",
            enqueue=True,             # 队列模式，窗口并行分析时线程安全
            compression="zip",
        )


class InterceptHandler(logging.Handler):
    """将标准库日志转发到loguru"""

    def emit(self, record):
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        logger.opt(depth=6, exception=record.exc_info).log(level, record.getMessage())


def handle_exception(exc_type, exc_value, exc_traceback):
    """处理未捕获的异常"""
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return
    logger.opt(exception=(exc_type, exc_value, exc_traceback)).error("未捕获的异常")


setup_logging()

# 配置所有Python标准库日志
logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)

# 特别配置uvicorn和fastapi的日志
for _log in ['uvicorn', 'uvicorn.access', 'uvicorn.error', 'fastapi']:
    _logger = logging.getLogger(_log)
    _logger.handlers = [InterceptHandler()]
    _logger.propagate = False

sys.excepthook = handle_exception

# 导出日志对象
log = logger

__all__ = ['log', 'logger', 'setup_logging']
