"""
Build script for ssepres.

Metadata, dependencies and the console script live in setup.cfg; this
script only attaches README.md as the long description shown on the
package index.
"""
from pathlib import Path

from setuptools import setup

README = Path(__file__).parent.resolve() / "README.md"

setup(
    long_description=README.read_text(encoding="utf-8"),
    long_description_content_type="text/markdown",
)
