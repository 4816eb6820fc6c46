import inspect
import logging
from typing import Generic, Optional, TypeVar, Union

from fastapi import Request
from starlette.responses import JSONResponse

logger = logging.getLogger(__name__)

T = TypeVar('T')


class AppExceptionCase(Exception):
    status_code: int = 500
    code: str = 'internal_error'

    def __init__(self, context: Optional[dict] = None, status_code: Optional[int] = None):
        self.exception_case = self.__class__.__name__
        if status_code is not None:
            self.status_code = status_code
        self.context = context or {}

    def __str__(self):
        return (
                f"<AppException {self.exception_case} - "
                + f"status_code={self.status_code} - code={self.code} - context={self.context}>"
        )


class EmptyQuery(AppExceptionCase):
    status_code = 400
    code = 'empty_query'


class InvalidLimit(AppExceptionCase):
    status_code = 400
    code = 'invalid_limit'


class InvalidCursor(AppExceptionCase):
    status_code = 400
    code = 'invalid_cursor'


class InvalidFlag(AppExceptionCase):
    status_code = 400
    code = 'invalid_flag'


class PageNotFound(AppExceptionCase):
    status_code = 404
    code = 'not_found'


class NoSources(AppExceptionCase):
    status_code = 503
    code = 'no_sources'


async def app_exception_handler(request: Request, exc: AppExceptionCase):
    return JSONResponse(
        status_code=exc.status_code,
        content={
            "error": exc.code,
            "context": exc.context,
        },
    )


class ServiceResult(Generic[T]):
    """Either the value a service produced or the `AppExceptionCase` it failed with."""

    def __init__(self, arg: Union[T, AppExceptionCase]):
        self.value = arg
        self.success = not isinstance(arg, AppExceptionCase)
        self.error: Optional[AppExceptionCase] = None if self.success else arg
        self.status_code = None if self.error is None else self.error.status_code

    def __repr__(self):
        if self.error is None:
            return '<ServiceResult ok>'
        return f'<ServiceResult {self.error.exception_case} {self.error.code}>'


def caller_info() -> str:
    info = inspect.getframeinfo(inspect.stack()[2][0])
    return f'{info.filename}:{info.function}:{info.lineno}'


def handle_result(result: ServiceResult):
    """Unwrap a result inside a route: return the value or raise the error case."""
    if result.error is not None:
        logger.error('%s | caller=%s', result.error, caller_info())
        raise result.error
    return result.value
