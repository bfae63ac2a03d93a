import os
import json
from pathlib import Path
from typing import Dict, Any, Optional, Type, TypeVar

from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from app.core.errors import ConfigurationError

ModelT = TypeVar("ModelT", bound=BaseModel)

ENV_PREFIX = "JITTER_"
ENV_SEPARATOR = "__"


def convert_value(value: str) -> Any:
    """
    类型转换
    支持：整数、浮点数、布尔值、None值的转换
    """
    if not isinstance(value, str):
        return value

    lowered = value.lower()
    if lowered in ("none", "null"):
        return None
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False

    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


# noinspection PyMethodMayBeStatic
class _ConfigManager:
    """
    配置管理器
    支持从config.json和环境变量动态加载配置

    环境变量命名约定：
    - 使用JITTER_前缀，双下划线分隔层级
    - 例如：JITTER_ANALYSIS__OVERSAMPLE 对应 {"analysis": {"oversample": value}}
    - 例如：JITTER_LOG__FILE__PATH 对应 {"log": {"file": {"path": value}}}

    config.json中CONFIG_OVERRIDE为true时JSON优先，否则环境变量优先。
    """

    def __init__(self, path: Optional[str] = None):
        self._path = Path(path or os.environ.get("JITTER_CONFIG", "config.json"))
        self._config: Dict[str, Any] = {}
        self._json_config: Dict[str, Any] = {}
        self._env_vars_config: Dict[str, Any] = {}
        self.config_override = False
        self._load_config()

    def _load_json_config(self) -> Dict[str, Any]:
        """加载JSON配置文件"""
        if self._path.exists():
            with open(self._path, "r", encoding="utf-8") as f:
                return json.load(f)
        return {}

    def _save_json_config(self):
        """保存配置到JSON文件"""
        with open(self._path, "w", encoding="utf-8") as f:
            json.dump(self._json_config, f, indent=4, ensure_ascii=False)

    def _create_nested_dict(self, parts, value: Any) -> Dict[str, Any]:
        """创建嵌套字典结构"""
        result: Dict[str, Any] = {}
        current = result
        for part in parts[:-1]:
            current[part] = {}
            current = current[part]
        current[parts[-1]] = value
        return result

    def _load_env_vars(self) -> Dict[str, Any]:
        """加载带前缀的环境变量"""
        env_config: Dict[str, Any] = {}
        for key, value in os.environ.items():
            if not key.startswith(ENV_PREFIX) or key == "JITTER_CONFIG":
                continue
            parts = key[len(ENV_PREFIX):].lower().split(ENV_SEPARATOR)
            nested = self._create_nested_dict(parts, convert_value(value))
            env_config = self._merge_configs(env_config, nested)
        return env_config

    def _merge_configs(self, base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        """递归合并配置字典"""
        result = base.copy()
        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._merge_configs(result[key], value)
            else:
                result[key] = value
        return result

    def _load_config(self):
        """加载所有配置并按优先级合并"""
        self._json_config = self._load_json_config()
        self._env_vars_config = self._load_env_vars()
        self.config_override = bool(self._json_config.get("CONFIG_OVERRIDE", False))

        if self.config_override:
            self._config = self._merge_configs(self._env_vars_config, self._json_config)
        else:
            self._config = self._merge_configs(self._json_config, self._env_vars_config)

    def get(self, key: str, default: Any = None) -> Any:
        """获取配置值，支持使用点号访问嵌套配置"""
        if not key:
            return default

        value: Any = self._config
        for k in key.split("."):
            if not isinstance(value, dict):
                return default
            value = value.get(k)
            if value is None:
                return default
        return value

    def set(self, key: str, value: Any, save: bool = False):
        """
        设置配置值

        :param key: 配置键，使用点号分隔的路径
        :param value: 配置值
        :param save: 是否写回config.json
        """
        nested = self._create_nested_dict(key.split("."), value)
        self._config = self._merge_configs(self._config, nested)
        self._json_config = self._merge_configs(self._json_config, nested)
        if save:
            self._save_json_config()

    def section(self, key: str, model: Type[ModelT], **overrides: Any) -> ModelT:
        """
        按配置节构建pydantic模型

        :param key: 配置节名称，例如 "analysis"
        :param model: 目标模型类
        :param overrides: 优先于配置文件的字段值（None值忽略）
        """
        data = dict(self.get(key, {}) or {})
        data.update({k: v for k, v in overrides.items() if v is not None})
        fields = set(model.model_fields)
        try:
            return model(**{k: v for k, v in data.items() if k in fields})
        except PydanticValidationError as e:
            raise ConfigurationError(f"配置节 {key} 无效", detail=e.errors(include_url=False)) from e

    def get_all(self) -> Dict[str, Any]:
        """获取所有配置"""
        return self._config.copy()

    def reload(self):
        """重新加载配置"""
        self._load_config()


def parse_key_value_text(text: str) -> Dict[str, Any]:
    """
    解析纯文本key/value配置（用于DummySpec等）

    格式：每行 key = value，#开头为注释，空行忽略
    """
    result: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"第{lineno}行缺少'='", detail={"line": raw})
        key, value = line.split("=", 1)
        result[key.strip()] = convert_value(value.strip())
    return result


# 创建全局配置实例
config = _ConfigManager()

__all__ = ['config', 'parse_key_value_text']
