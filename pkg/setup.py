#!/usr/bin/env python

import io
from setuptools import find_packages, setup

setup(
    name='kssl',
    version='0.1',
    license='MIT',
    packages=find_packages(exclude=['tests']),
    install_requires=io.open('requirements.txt',
                             encoding='utf-8').read().split(),
    entry_points={
        'console_scripts': ['kssl=kssl.cli:main'],
    },
    description=('Optimal augmentations for kernel joint-embedding'
                 ' self-supervised learning (library and commandline-tool)'),
    long_description='\n' + io.open('README.md', encoding='utf-8').read(),
)
