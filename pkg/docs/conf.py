project = "captiongan"
copyright = "2024, captiongan contributors"
author = "captiongan contributors"

# Do not modify manually
release = "0.3.0"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.intersphinx",
]
templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

intersphinx_mapping = {
    "torch": ("https://pytorch.org/docs/stable/", None),
}

html_theme = "sphinx_rtd_theme"
html_static_path = ["_static"]
