"""Packaging for delta_infer."""
import os

from setuptools import find_packages, setup

here = os.path.abspath(os.path.dirname(__file__))
about = {}
with open(os.path.join(here, 'delta_infer', 'version.py')) as f:
    exec(f.read(), about)

setup(
    name=about['NAME'],
    version=about['VERSION'],
    description=about['DESCRIPTION'],
    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    python_requires='>=3.6',
    install_requires=[
        'click',
        'numpy',
        'pendulum',
        'scipy',
        'starlette',
        'ujson',
    ],
    scripts=['delta-infer'],
)
