"""
The hand-enumerable reference web.

    hust.edu.cn/p0 -> hust.edu.cn/p1, pku.edu.cn/p0
    pku.edu.cn/p0  -> hust.edu.cn/p1
    mit.edu.us/p0  -> hust.edu.cn/p1
"""
from typing import Dict, List, Optional
from urllib.parse import urlsplit

from ..webcorpus import Corpus, PageSource, Site, page_url, render_page

SITE_A = 'hust.edu.cn'
SITE_B = 'pku.edu.cn'
SITE_C = 'mit.edu.us'

A_P0 = page_url(SITE_A, 0)
A_P1 = page_url(SITE_A, 1)
B_P0 = page_url(SITE_B, 0)
C_P0 = page_url(SITE_C, 0)

EXPECTED_OVERLAP: Dict[str, int] = {A_P0: 1, A_P1: 3, B_P0: 2, C_P0: 1}


def tiny3_pages() -> Dict[str, bytes]:
    return {
        A_P0: render_page(['w0', 'w9'], ['w2'], ['w1', 'w4', 'w4', 'w9'],
                          [('p1.html', 'w6'), (B_P0, 'w7')]),
        A_P1: render_page(['w3', 'w5'], ['w8'], ['w3', 'w9'], []),
        B_P0: render_page(['w2', 'w6'], ['w7'], ['w6', 'w1'], [(A_P1, 'w4')]),
        C_P0: render_page(['w4', 'w8'], ['w0'], ['w8', 'w2'], [(A_P1, 'w5')]),
    }


def tiny3_corpus(pages: Optional[Dict[str, bytes]] = None) -> Corpus:
    sites = (
        Site(site_name=SITE_A, domain='edu.cn', root_url=A_P0),
        Site(site_name=SITE_B, domain='edu.cn', root_url=B_P0),
        Site(site_name=SITE_C, domain='edu.us', root_url=C_P0),
    )
    pages = pages if pages is not None else tiny3_pages()
    return Corpus(sites=sites,
                  pages={url: PageSource(html_bytes=html, site_name=urlsplit(url).hostname)
                         for url, html in pages.items()})


def tiny3_site_names() -> List[str]:
    return [SITE_A, SITE_B, SITE_C]
