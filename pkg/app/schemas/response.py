import uuid
from typing import Generic, TypeVar, Optional

from pydantic import BaseModel, ConfigDict, Field

# 定义泛型类型变量
DataT = TypeVar("DataT")


def generate_request_id() -> str:
    """生成请求ID"""
    return str(uuid.uuid4())


class ResponseModel(BaseModel, Generic[DataT]):
    """
    统一响应模型
    """
    code: int = Field(
        default=200,
        description="响应状态码，200表示成功，其他表示错误",
        examples=[200, 400, 422, 460, 462, 500]
    )
    msg: str = Field(
        default="success",
        description="响应信息",
        examples=["success", "参数验证错误", "配置错误", "过零点对齐失败", "服务器错误"]
    )
    data: Optional[DataT] = Field(
        default=None,
        description="响应数据，成功时返回具体数据，错误时可能包含错误详情"
    )
    request_id: Optional[str] = Field(
        default_factory=generate_request_id,
        description="请求ID，用于追踪和调试"
    )

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [
                {
                    "summary": "成功响应示例",
                    "description": "DRS分解结果",
                    "value": {
                        "code": 200,
                        "msg": "success",
                        "data": {
                            "sigma_n_ps": 43.1,
                            "sigma_a_ps": 35.7,
                            "sigma_b_ps": 35.9
                        },
                        "request_id": "550e8400-e29b-41d4-a716-446655440000"
                    }
                },
                {
                    "summary": "错误响应示例",
                    "description": "参数不满足约束",
                    "value": {
                        "code": 422,
                        "msg": "分析参数无效",
                        "data": ["oversample必须是不小于2的2的幂"],
                        "request_id": "550e8400-e29b-41d4-a716-446655440001"
                    }
                }
            ]
        }
    )
