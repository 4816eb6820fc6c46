import asyncio
import logging
from dataclasses import dataclass
from json import JSONDecodeError
from typing import Any, Optional, Type, TypeVar

import httpx
from pydantic import BaseModel, ValidationError

logger = logging.getLogger(__name__)

DataModel = TypeVar("DataModel", bound=BaseModel)


@dataclass
class RequestResult:
    success: bool
    data: Optional[DataModel] = None
    error: Optional[Exception] = None


class BadResponseCode(Exception):
    def __init__(self, status_code: int, text: str):
        super().__init__(f'{status_code}: {text[:255]}')
        self.status_code = status_code


class HttpClient:
    """
    JSON client for talking to other nodes.

    Pass `transport` to route requests somewhere other than the network,
    e.g. an in-process ASGI app.
    """

    base_url: str
    max_try_count = 3

    def __init__(self,
                 base_url: str,
                 concurrency: int = 10,
                 *,
                 transport: Optional[httpx.AsyncBaseTransport] = None,
                 timeout: float = 5.0,
                 max_try_count: Optional[int] = None):
        self.base_url = base_url
        self.limit = asyncio.Semaphore(value=concurrency)
        self.transport = transport
        self.timeout = timeout
        if max_try_count:
            self.max_try_count = max_try_count

    def create_client(self) -> httpx.AsyncClient:
        if self.transport is not None:
            return httpx.AsyncClient(base_url=self.base_url, transport=self.transport, timeout=self.timeout)
        return httpx.AsyncClient(base_url=self.base_url, http2=True, timeout=self.timeout)

    async def request_json_api(self,
                               method: str,
                               path: str,
                               return_type: Type[DataModel],
                               *,
                               json: Any = None,
                               params: Optional[dict] = None,
                               headers: Optional[dict] = None,
                               success_code: int = 200,
                               max_try_count: Optional[int] = None
                               ) -> RequestResult:
        if not max_try_count:
            max_try_count = self.max_try_count
        try_count = 1
        while True:
            async with self.limit:
                async with self.create_client() as client:
                    try:
                        response = await client.request(method, path,
                                                        json=json,
                                                        params=params,
                                                        headers=headers)
                        if response.status_code != success_code:
                            raise BadResponseCode(response.status_code, response.text)
                        data = return_type.parse_obj(response.json())
                        return RequestResult(success=True, data=data)
                    except (httpx.HTTPError, JSONDecodeError, ValidationError, BadResponseCode) as e:
                        if try_count >= max_try_count:
                            logger.error('Get error for %s %s: %s', self.base_url, path, e, exc_info=True)
                            return RequestResult(success=False, error=e)
                        else:
                            logger.info('Get error for %s %s: %s', self.base_url, path, e, exc_info=True)
                            try_count += 1
