# -*- coding: utf-8 -*-
#
# darktrack documentation build configuration file

import sys
import os

sys.path.insert(0, os.path.abspath('..'))

from darktrack import __version__  # noqa: E402

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.coverage',
]

source_suffix = '.rst'
master_doc = 'index'
exclude_patterns = ['_build']

project = u'darktrack'
copyright = u'2026, the darktrack authors'
release = __version__
version = '.'.join(release.split('.')[:2])

pygments_style = 'sphinx'
html_theme = 'alabaster'
htmlhelp_basename = 'darktrackdoc'

man_pages = [
    ('index', 'darktrack', u'darktrack Documentation',
     [u'the darktrack authors'], 1)
]
