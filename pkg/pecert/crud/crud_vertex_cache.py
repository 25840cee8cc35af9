import logging
from typing import Optional

from sqlalchemy.orm import Session

from pecert.crud.base import CRUDBase
from pecert.models.vertex_cache import VertexCacheEntry
from pecert.schemas.store import VertexCacheCreate

logger = logging.getLogger(__name__)


class CRUDVertexCache(CRUDBase[VertexCacheEntry, VertexCacheCreate]):
    def get_by_key(self, db: Session, *, key: str) -> Optional[VertexCacheEntry]:
        return db.query(self.model).filter(VertexCacheEntry.id == key).first()

    def put(
        self,
        db: Session,
        *,
        key: str,
        chart_id: str,
        label: str,
        payload: str,
        vertex_count: int,
    ) -> VertexCacheEntry:
        """Insert or replace the cached vertex list for ``key``."""
        existing = self.get_by_key(db, key=key)
        if existing is not None:
            existing.payload = payload  # type: ignore[assignment]
            existing.vertex_count = vertex_count  # type: ignore[assignment]
            db.add(existing)
            db.commit()
            db.refresh(existing)
            return existing
        logger.debug("caching %d vertices under %s", vertex_count, key[:12])
        return self.create(
            db,
            obj_in=VertexCacheCreate(
                id=key,
                chart_id=chart_id,
                label=label,
                vertex_count=vertex_count,
                payload=payload,
            ),
        )


vertex_cache = CRUDVertexCache(VertexCacheEntry)
