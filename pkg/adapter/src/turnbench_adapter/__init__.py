from .adapter import (
    Adapter,
    AdapterConfig,
    AdapterError,
    AdapterStats,
    HubConnection,
    HubHttpError,
    ModelHook,
    StageInput,
    StageOutput,
    echo_model,
)

__all__ = [
    "Adapter",
    "AdapterConfig",
    "AdapterError",
    "AdapterStats",
    "HubConnection",
    "HubHttpError",
    "ModelHook",
    "StageInput",
    "StageOutput",
    "echo_model",
]
