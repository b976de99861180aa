#!/usr/bin/env python3

from setuptools import find_packages, setup
from pathlib import Path

fare_dir = Path(__file__).parent
install_requires = (fare_dir / 'requirements.txt').read_text().splitlines()
extras_require = {'test': ['pytest']}
extras_require['dev'] = extras_require['test']

setup(
    name='fare',
    version='0.1',
    python_requires='>=3.8.0',
    description='Failure-aware imitation-learned navigation: VIB OOD detection, '
                'conformal thresholds, Grad-CAM recognition and recovery.',
    author='The Fare Development Team',
    license='Apache-2.0 License',
    packages=find_packages(exclude=['test', 'test.*']),
    install_requires=install_requires,
    extras_require=extras_require,
    entry_points={'console_scripts': ['fare = fare.cli:main']},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Intended Audience :: Science/Research",
        "Operating System :: POSIX :: Linux",
        "License :: OSI Approved :: Apache Software License",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Software Development :: Libraries :: Python Modules",
        "Typing :: Typed"
    ],
)
