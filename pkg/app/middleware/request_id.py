"""Request ID tracking for debugging"""

from fastapi import Request
from starlette.middleware.base import BaseHTTPMiddleware
import uuid

from app.services.observability import run_id_var


class RequestIDMiddleware(BaseHTTPMiddleware):
    """Add a unique request ID to each request and to its log records"""

    async def dispatch(self, request: Request, call_next):
        request_id = request.headers.get("X-Request-ID") or str(uuid.uuid4())
        request.state.request_id = request_id
        token = run_id_var.set(request_id)
        try:
            response = await call_next(request)
        finally:
            run_id_var.reset(token)
        response.headers["X-Request-ID"] = request_id
        return response
