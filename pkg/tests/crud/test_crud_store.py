import uuid

from sqlalchemy.orm import Session

from pecert import crud
from pecert.db.session import make_session
from pecert.models.result import ResultRecord
from pecert.schemas.store import ResultRecordCreate


def test_vertex_cache_put_replaces(db: Session) -> None:
    key = uuid.uuid4().hex
    first = crud.vertex_cache.put(
        db, key=key, chart_id="ns-2-2-2", label="NS", payload="0,1", vertex_count=1
    )
    assert first.vertex_count == 1
    second = crud.vertex_cache.put(
        db, key=key, chart_id="ns-2-2-2", label="NS", payload="0,1\n1,0", vertex_count=2
    )
    assert second.id == first.id
    assert repr(second) == f"<VertexCacheEntry {key}>"
    stored = crud.vertex_cache.get_by_key(db, key=key)
    assert stored is not None
    assert stored.vertex_count == 2
    assert stored.payload == "0,1\n1,0"


def test_vertex_cache_miss(db: Session) -> None:
    assert crud.vertex_cache.get_by_key(db, key="absent") is None


def test_result_records(db: Session) -> None:
    fingerprint = uuid.uuid4().hex
    for n in (10**8, 10**6):
        crud.result.create(
            db,
            obj_in=ResultRecordCreate(
                n=n,
                method="pe",
                polytope_fingerprint=fingerprint,
                rate=0.01,
                total_bits=0.01 * n,
                beta=0.02,
                certificate_path=f"certificate-pe-n{n}.json",
            ),
        )
    rows = (
        db.query(ResultRecord)
        .filter(ResultRecord.polytope_fingerprint == fingerprint)
        .order_by(ResultRecord.n)
        .all()
    )
    assert [r.n for r in rows] == [10**6, 10**8]
    assert rows[0].kappa is None
    assert all(r.method == "pe" for r in rows)
    assert len({r.id for r in rows}) == 2


def test_make_session_on_file(tmp_path) -> None:
    session = make_session(str(tmp_path / "cache.sqlite"))
    try:
        crud.vertex_cache.put(
            session, key="k", chart_id="ns-2-2-2", label=None, payload="", vertex_count=0
        )
        assert crud.vertex_cache.get_by_key(session, key="k") is not None
    finally:
        session.close()
    assert (tmp_path / "cache.sqlite").exists()
