from pecert.models.vertex_cache import VertexCacheEntry  # noqa: F401
from pecert.models.result import ResultRecord  # noqa: F401
