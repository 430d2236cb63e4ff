# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
#
# This file does only contain a selection of the most common options. For a
# full list see the documentation:
# http://www.sphinx-doc.org/en/master/config

# -- Path setup --------------------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('..'))


# -- Project information -----------------------------------------------------

project = 'shelbylab'
author = 'shelbylab developers'

import shelbylab
version = shelbylab.__version__
release = version


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.intersphinx',
    'sphinx.ext.todo',
    'sphinx.ext.coverage',
    'sphinx.ext.viewcode',
    'sphinxcontrib.programoutput',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
language = 'en'
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = None


# -- Options for HTML output -------------------------------------------------

html_theme = 'alabaster'
html_theme_options = {
    'description': 'Encode, commit, audit, pay, and simulate strategic '
                   'storage providers',
    'description_font_style': 'italic',
    'font_family': 'Arial',
    'page_width': '1200px',  # default is 940
    'sidebar_width': '280px',  # default is 220
    'show_relbars': True,
}
html_sidebars = {
    '**': [
        'about.html',
        'navigation.html',
        'relations.html',
        'searchbox.html',
    ]
}
htmlhelp_basename = 'shelbylabdoc'


# -- Options for LaTeX and manual page output --------------------------------

latex_documents = [
    (master_doc, 'shelbylab.tex', 'shelbylab Documentation',
     author, 'manual'),
]

man_pages = [
    (master_doc, 'shelbylab', 'shelbylab Documentation',
     [author], 1)
]


# -- Extension configuration -------------------------------------------------

intersphinx_mapping = {
    'python':   ('https://docs.python.org/3', None),
    'numpy':    ('https://numpy.org/doc/stable', None),
    'pandas':   ('https://pandas.pydata.org/docs', None),
}

todo_include_todos = True
