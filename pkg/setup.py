import pathlib
import sys

from setuptools import find_packages, setup

import versioneer

min_version = (3, 8)

if sys.version_info < min_version:
    error = """
vibpolariton does not support Python {0}.{1}.
Python {2}.{3} and above is required. Check your Python version like so:

python3 --version

This may be due to an out-of-date pip. Make sure you have pip >= 9.0.1.
Upgrade pip like so:

pip install --upgrade pip
""".format(*sys.version_info[:2], *min_version)
    sys.exit(error)


here = pathlib.Path(__file__).parent.absolute()

with open(here / 'README.rst', encoding='utf-8') as readme_file:
    readme = readme_file.read()

with open(here / 'requirements.txt', 'rt') as requirements_file:
    # Parse requirements.txt, ignoring any commented-out lines.
    requirements = [line for line in requirements_file.read().splitlines()
                    if not line.startswith('#')]


setup(
    name='vibpolariton',
    version=versioneer.get_version(),
    cmdclass=versioneer.get_cmdclass(),
    license='BSD',
    packages=find_packages(exclude=['docs']),
    description='Anharmonic vibrational polaritons of a cavity-coupled '
                'molecular chain',
    long_description=readme,
    entry_points={
        'console_scripts': [
            'vibpolariton = vibpolariton.cli:main',
        ],
    },
    include_package_data=True,
    package_data={
        'vibpolariton': [
            # When adding files here, remember to update MANIFEST.in as well,
            # or else they will not be included in the distribution on PyPI!
            'examples/water.yaml',
        ]
    },
    install_requires=requirements,
    python_requires='>={}.{}'.format(*min_version),
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Physics',
    ],
)
