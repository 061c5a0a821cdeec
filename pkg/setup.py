'''setup for package'''

from setuptools import setup

with open('README.rst') as h_rst:
    LONG_DESCRIPTION = h_rst.read()

with open('docs/changes.rst') as h_rst:
    BUF = h_rst.read()
    BUF = BUF.replace('``', '$')        # protect existing code markers
    for xref in [':meth:', ':attr:', ':class:', ':func:']:
        BUF = BUF.replace(xref, '')     # remove xrefs
    BUF = BUF.replace('`', '``')        # replace refs with code markers
    BUF = BUF.replace('$', '``')        # restore existing code markers
LONG_DESCRIPTION += BUF

DESCRIPTION = "Track coordinated senders seen by a network telescope"

setup(
    name="darktrack",
    version="0.1.0",

    packages=['darktrack'],

    install_requires=['paramiko>=2.7',
                      'numpy>=1.20',
                      'scipy>=1.6',
                      'scikit-learn>=1.3',
                      'pandas>=1.5',
                      'PyYAML>=5.4'],
    python_requires='>=3.9',
    entry_points={
        'console_scripts': ['darktrack = darktrack.cli:main'],
    },

    # metadata for upload to PyPI
    description=DESCRIPTION,
    license="BSD",
    keywords="darknet telescope scanning embedding clustering hdbscan",
    long_description=LONG_DESCRIPTION,
    platforms=['any'],
    classifiers=[
        'Development Status :: 3 - Alpha',
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: Implementation :: CPython',
        'Topic :: System :: Networking :: Monitoring',
    ],

)
