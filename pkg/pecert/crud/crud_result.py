from pecert.crud.base import CRUDBase
from pecert.models.result import ResultRecord
from pecert.schemas.store import ResultRecordCreate


class CRUDResult(CRUDBase[ResultRecord, ResultRecordCreate]):
    """Append-only store of certified results; rows are read back with SQL."""


result = CRUDResult(ResultRecord)
