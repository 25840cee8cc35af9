# Import all the models, so that Base has them before create_all runs
from pecert.db.base_class import Base  # noqa
from pecert.models.vertex_cache import VertexCacheEntry  # noqa
from pecert.models.result import ResultRecord  # noqa
