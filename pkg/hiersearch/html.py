import logging
import re
from typing import List, Optional

from bs4 import BeautifulSoup

logger = logging.getLogger(__name__)

DEFAULT_ENCODING = 'utf-8'

_CHARSET = re.compile(r'charset\s*=\s*["\']?([A-Za-z0-9_.:-]+)', re.IGNORECASE)


def parse_html(html_bytes: bytes) -> BeautifulSoup:
    if not html_bytes:
        return BeautifulSoup('', 'html.parser')
    try:
        return BeautifulSoup(html_bytes, 'html.parser')
    except Exception as e:  # bs4 can choke on arbitrary binary input
        logger.warning('Unparseable document (%s bytes): %s', len(html_bytes), e)
        return BeautifulSoup('', 'html.parser')


def declared_encoding(soup: BeautifulSoup) -> Optional[str]:
    for meta in soup.find_all('meta'):
        charset = meta.get('charset')
        if charset:
            return charset.strip().lower()
        if (meta.get('http-equiv') or '').lower() == 'content-type':
            match = _CHARSET.search(meta.get('content') or '')
            if match:
                return match.group(1).lower()
    return None


def anchor_hrefs(soup: BeautifulSoup) -> List[str]:
    """Non-empty anchor targets in document order."""
    hrefs = []
    for anchor in soup.find_all('a', href=True):
        href = anchor['href'].strip()
        if href:
            hrefs.append(href)
    return hrefs
