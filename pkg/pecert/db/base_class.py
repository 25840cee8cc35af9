from typing import Any

from sqlalchemy.orm import DeclarativeBase


class Base(DeclarativeBase):
    """Declarative base of the vertex cache and result store tables."""

    id: Any

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.id}>"
