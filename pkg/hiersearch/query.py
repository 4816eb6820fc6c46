from typing import Optional, Type

from fastapi import Query

from .exceptions import AppExceptionCase, InvalidCursor, InvalidFlag, InvalidLimit
from .settings import get_settings

TRUE_VALUES = frozenset(('1', 'true', 'yes', 'on'))
FALSE_VALUES = frozenset(('0', 'false', 'no', 'off', ''))


def parse_count(value: Optional[str], error: Type[AppExceptionCase], field: str) -> int:
    """Parse an unsigned integer query parameter, raising `error` on anything else."""
    try:
        parsed = int(str(value).strip())
    except (TypeError, ValueError):
        raise error({field: value})
    if parsed < 0:
        raise error({field: value})
    return parsed


def parse_flag(value: Optional[str]) -> bool:
    if value is None:
        return False
    lowered = value.strip().lower()
    if lowered in TRUE_VALUES:
        return True
    if lowered in FALSE_VALUES:
        return False
    raise ValueError(f'Bad boolean flag "{value}"')


class SearchQuery:
    """
    `GET /v1/search` parameters.

    Only the types are checked here; range checks on `limit` and the
    empty-query check belong to the services.
    """

    def __init__(
            self,
            q: str = Query(''),
            limit: Optional[str] = Query(None),
            exhaustive: Optional[str] = Query(None),
    ):
        self.q = q
        if limit is None:
            self.limit = get_settings().default_limit
        else:
            self.limit = parse_count(limit, InvalidLimit, 'limit')
        try:
            self.exhaustive = parse_flag(exhaustive)
        except ValueError:
            raise InvalidFlag({'exhaustive': exhaustive})


class ExportQuery:

    def __init__(
            self,
            cursor: Optional[str] = Query('0'),
            max_records: Optional[str] = Query(None, alias='max'),
    ):
        self.cursor = parse_count(cursor, InvalidCursor, 'cursor')
        self.max = None if max_records is None else parse_count(max_records, InvalidLimit, 'max')
