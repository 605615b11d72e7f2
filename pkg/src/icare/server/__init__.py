"""Health-information server: record store, access control, medical guidance."""

from .core import (
    AuthorizationError,
    HealthServer,
    KnowledgeEntry,
    Message,
    MessageThread,
    NotFoundError,
    ServerError,
    SubjectStore,
    UserAccount,
    ValidationError,
    confidence_level,
)

__all__ = [
    "AuthorizationError",
    "HealthServer",
    "KnowledgeEntry",
    "Message",
    "MessageThread",
    "NotFoundError",
    "ServerError",
    "SubjectStore",
    "UserAccount",
    "ValidationError",
    "confidence_level",
    "create_app",
]


def create_app(core: HealthServer):
    # Imported lazily so the sim path never needs FastAPI.
    from .api import create_app as _create_app

    return _create_app(core)
