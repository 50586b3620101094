# Sphinx configuration of the MegaAgent documentation.

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

import megaagent  # noqa: E402

project = "MegaAgent"
author = "MegaAgent developers"
copyright = author
version = release = megaagent.__version__
language = "en"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx_autodoc_typehints",
    "sphinx.ext.intersphinx",
    "sphinx.ext.viewcode",
    "enum_tools.autoenum",
]

master_doc = "index"
source_suffix = ".rst"
exclude_patterns = ["_build", "README.md"]

# Every cross reference must resolve, except for third-party types
# without inventories.
nitpicky = True
nitpick_ignore = [
    ("py:class", "numpy.ndarray"),
    ("py:class", "httpx.Response"),
    ("py:class", "httpx.Client"),
    ("py:class", "enum.EnumMeta"),
]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
}

# API pages follow source order; docstrings use the Google style with
# ``Args``, ``Return``, ``Raises`` and ``Usage`` sections.
autodoc_member_order = "bysource"
autodoc_typehints = "none"
napoleon_custom_sections = [("Return", "returns_style"), ("Usage", "example")]
napoleon_use_param = True
napoleon_use_rtype = True
napoleon_attr_annotations = True
typehints_document_rtype = True
typehints_fully_qualified = False

html_theme = "pydata_sphinx_theme"
html_theme_options = {"secondary_sidebar_items": []}
html_show_sourcelink = False
html_show_sphinx = False
pygments_style = "colorful"
