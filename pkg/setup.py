#!/usr/bin/env python
"""Setup script for the scrreid Python package"""

import codecs
import setuptools

import scrreid


setuptools.setup(
    # general description
    name='scrreid',
    description=(
        'Short-code person re-identification retrieval with sub-space '
        'quantization and counting sort ranking'),
    version=scrreid.__version__,

    # python package dependencies
    install_requires=[
        'click', 'joblib', 'numba', 'numpy', 'pandas', 'progressbar2',
        'pyyaml', 'rich', 'scipy'],
    tests_require=['pytest'],

    # include Python code
    packages=setuptools.find_packages(exclude=['test']),

    # numba caches compiled kernels next to the sources
    zip_safe=False,

    # the command-line scripts to export
    entry_points={
        'console_scripts': [
            'scrreid-gen         = scrreid.cli.gen:gen',
            'scrreid-train       = scrreid.cli.train:train',
            'scrreid-build       = scrreid.cli.build:build',
            'scrreid-search      = scrreid.cli.search:search',
            'scrreid-evaluate    = scrreid.cli.evaluate:evaluate',
            'scrreid-bench       = scrreid.cli.bench:bench',
            'scrreid-sweep       = scrreid.cli.sweep:sweep',
        ]},

    # metadata
    license='GPL3',
    long_description=codecs.open('README.md', encoding='utf-8').read(),
    long_description_content_type="text/markdown",
    python_requires='>=3.8',
)
