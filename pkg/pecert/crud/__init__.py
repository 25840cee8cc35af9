from .crud_vertex_cache import vertex_cache  # noqa: F401
from .crud_result import result  # noqa: F401
