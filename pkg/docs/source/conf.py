# Configuration file for the Sphinx documentation builder.
#
# Only a selection of the most common options is set here.

# -- Path setup --------------------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('../..'))

import phishscan  # noqa: E402


# -- Project information -----------------------------------------------------

project = 'phishscan'
copyright = '2024, phishscan contributors'
author = 'phishscan contributors'
release = phishscan.__version__


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
]

templates_path = ['_templates']

exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = 'alabaster'

html_static_path = ['_static']
