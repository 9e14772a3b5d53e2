# Always prefer setuptools over distutils
from setuptools import setup, find_packages
# To use a consistent encoding
from codecs import open
from os import path

pwd = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(pwd, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='pointcloud_defense',

    # Versions should comply with PEP440.
    version='0.1.0',

    description='Adversarial attacks and denoise-upsample defenses for point-cloud classifiers',
    long_description=long_description,
    long_description_content_type="text/markdown",

    # Choose your license
    license='Apache License 2.0',

    # See https://pypi.python.org/pypi?%3Aaction=list_classifiers
    classifiers=[
        # How mature is this project? Common values are
        #   3 - Alpha
        #   4 - Beta
        #   5 - Production/Stable
        'Development Status :: 3 - Alpha',
        "Operating System :: OS Independent",
        'License :: OSI Approved :: Apache Software License',
        # Indicate who your project is intended for
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Information Analysis",
        'Programming Language :: Python :: 3',
    ],

    # What does your project relate to?
    keywords='point cloud adversarial defense outlier removal upsampling',

    packages=find_packages(exclude=['contrib', 'docs', 'test']),
    python_requires='>=3.8',

    # List run-time dependencies here.  These will be installed by pip when
    # your project is installed.
    install_requires=[
        "numpy>=1.21",
        "scipy>=1.7",
        "PyYAML>=5.4",
        "tqdm>=4.60",
        "ipython>=7.0",
    ],

    # List additional groups of dependencies here (e.g. development
    # dependencies). You can install these using the following syntax,
    # for example:
    # $ pip install -e .[test]
    extras_require={
        'test': ['pytest', 'hypothesis'],
        'docs': ['sphinx', 'sphinx-rtd-theme'],
    },

    include_package_data=True,

    # To provide executable scripts, use entry points in preference to the
    # "scripts" keyword. Entry points provide cross-platform support and allow
    # pip to create the appropriate form of executable for the target platform.
    entry_points={
        'console_scripts': [
            'pointcloud-defense=pointcloud_defense.__main__:main',
        ],
    },
)
