from json import JSONDecodeError

import httpx
import pytest
import respx
from httpx import Response
from pydantic import ValidationError

from hiersearch.api import HealthStatus, SearchResponse, SearchResult
from hiersearch.http import BadResponseCode, HttpClient, RequestResult


@pytest.fixture
def http_client() -> HttpClient:
    return HttpClient('http://agg.edu.cn', concurrency=1)


@pytest.mark.asyncio
async def test_request_ok(http_client):
    with respx.mock:
        respx.get('http://agg.edu.cn/v1/search').mock(
            return_value=Response(200, json={'query': 'w3', 'results': [{'url': 'http://a/p0.html', 'score': 2}]}))
        result = await http_client.request_json_api('get', '/v1/search', SearchResponse, params={'q': 'w3'})
        assert isinstance(result, RequestResult)
        assert result.success is True
        assert result.data == SearchResponse(query='w3', results=[SearchResult(url='http://a/p0.html', score=2)])
        assert respx.calls.last.request.url.params['q'] == 'w3'


@pytest.mark.asyncio
async def test_request_bad_status_code(http_client):
    with respx.mock:
        respx.get('http://agg.edu.cn/v1/search').mock(return_value=Response(500))
        result = await http_client.request_json_api('get', '/v1/search', SearchResponse)
        assert result.success is False
        assert result.data is None
        assert isinstance(result.error, BadResponseCode)
        assert result.error.status_code == 500
        assert len(respx.calls) == http_client.max_try_count == 3


@pytest.mark.asyncio
async def test_request_bad_data(http_client):
    with respx.mock:
        respx.get('http://agg.edu.cn/v1/health').mock(return_value=Response(200, json={'status': 'ok'}))
        result = await http_client.request_json_api('get', '/v1/health', HealthStatus)
        assert result.success is False
        assert isinstance(result.error, ValidationError)
        assert len(respx.calls) == 3


@pytest.mark.asyncio
async def test_request_content_mismatch(http_client):
    with respx.mock:
        respx.get('http://agg.edu.cn/v1/health').mock(return_value=Response(200, content=b'ABC'))
        result = await http_client.request_json_api('get', '/v1/health', HealthStatus)
        assert result.success is False
        assert isinstance(result.error, JSONDecodeError)
        assert len(respx.calls) == 3


@pytest.mark.asyncio
async def test_request_connect_error(http_client):
    with respx.mock:
        respx.get('http://agg.edu.cn/v1/health').mock(side_effect=httpx.ConnectError)
        result = await http_client.request_json_api('get', '/v1/health', HealthStatus, max_try_count=2)
        assert result.success is False
        assert isinstance(result.error, httpx.ConnectError)
        assert len(respx.calls) == 2


@pytest.mark.asyncio
async def test_single_try_client():
    client = HttpClient('http://agg.edu.cn', max_try_count=1)
    with respx.mock:
        respx.get('http://agg.edu.cn/v1/health').mock(return_value=Response(503))
        result = await client.request_json_api('get', '/v1/health', HealthStatus)
        assert result.success is False
        assert len(respx.calls) == 1


@pytest.mark.asyncio
async def test_custom_transport_bypasses_network():
    transport = httpx.MockTransport(lambda request: Response(200, json={'node': request.url.host, 'role': 'leaf'}))
    client = HttpClient('http://leaf.pku.edu.cn', transport=transport)
    result = await client.request_json_api('get', '/v1/health', HealthStatus)
    assert result.success is True
    assert result.data == HealthStatus(node='leaf.pku.edu.cn', role='leaf')
