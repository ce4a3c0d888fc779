#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# Sphinx configuration for the expert_calibration documentation.

import sys
import os

sys.path.insert(0, os.path.abspath('../'))

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.todo',
    'sphinx.ext.viewcode',
    'sphinx.ext.mathjax',
    'matplotlib.sphinxext.plot_directive',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'Expert Calibration'
copyright = '2022, The expert_calibration developers'
author = 'The expert_calibration developers'

version = '0.2.2'
release = version

language = 'en'
exclude_patterns = ['_build']
pygments_style = 'sphinx'
todo_include_todos = True

plot_html_show_source_link = False
plot_formats = [('png', 100)]

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
htmlhelp_basename = 'expert_calibrationdoc'

latex_documents = [
    (master_doc, 'expert_calibration.tex',
     'expert\\_calibration Documentation', author, 'manual'),
]

man_pages = [
    (master_doc, 'expert_calibration', 'expert_calibration Documentation',
     [author], 1)
]

texinfo_documents = [
    (master_doc, 'expert_calibration', 'expert_calibration Documentation',
     author, 'expert_calibration',
     'Expert-calibrated learning to optimize.', 'Miscellaneous'),
]
