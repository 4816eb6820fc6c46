import logging
import time

from starlette.middleware.base import BaseHTTPMiddleware
from starlette.requests import Request

logger = logging.getLogger('hiersearch.requests')


class RequestLogMiddleware(BaseHTTPMiddleware):

    async def dispatch(self, request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        logger.info('%s %s -> %s in %.1f ms',
                    request.method, request.url, response.status_code,
                    (time.perf_counter() - started) * 1000)
        return response
