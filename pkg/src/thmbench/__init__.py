"""thmbench: dynamic theorem-MCQ benchmark construction and evaluation."""

from .gateway import (
    ChatRequest,
    ChatResponse,
    Gateway,
    MockRule,
    ScriptedMockBackend,
    TokenUsage,
    normalize_usage,
)
from .taxonomy import Category

__all__ = [
    "Category",
    "ChatRequest",
    "ChatResponse",
    "Gateway",
    "MockRule",
    "ScriptedMockBackend",
    "TokenUsage",
    "normalize_usage",
]

__version__ = "0.1.0"
