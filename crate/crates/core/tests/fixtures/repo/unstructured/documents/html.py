"""Tools for working with HTML documents."""

from typing import List, Optional

from lxml import etree

from .base import Document, Element

VALID_BULLET_TAGS: List[str] = ["ul", "ol", "li"]


def _construct_text(tag_elem: etree._Element) -> str:
    """Extract the text content of a tag element, joining nested text."""
    text = "".join(tag_elem.itertext())
    return text.strip()


def _is_container(tag_elem: etree._Element) -> bool:
    """Check whether a tag element can contain other elements."""
    return tag_elem.tag in ("div", "section", "article")


class HTMLDocument(Document):
    """A document represented as an HTML tree."""

    def __init__(self, stylesheet: Optional[str] = None):
        super().__init__()
        self.stylesheet = stylesheet
        self._parsed = False

    def read(self, content: str) -> List[Element]:
        """Parse HTML content into document elements."""
        root = etree.fromstring(content)
        self._parsed = True
        return [Element(_construct_text(child)) for child in root]

    def doctype(self) -> str:
        """Return the document type declaration."""
        ...
