from setuptools import setup


with open('README.md', encoding='utf-8') as readme:
    long_description = readme.read()

INSTALL_REQUIRE = [
    "numpy>=1.23.0",
    "pythonds>=1.2.1",
    "scikit-image>=0.19.0",
    "shapely>=2.0.0",
    "torch>=2.0.0",
    "PyYAML>=5.4",
]
TESTS_REQUIRE = ["twine>=3.2.0"]

setup(
    name="packsolver",
    version="1.0.0",
    description="Online packing of voxel shapes with candidate actions",
    long_description_content_type="text/markdown",
    long_description=long_description,
    packages=["packsolver"],
    license="MIT",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    install_requires=INSTALL_REQUIRE,
    test_require=TESTS_REQUIRE,
    entry_points={"console_scripts": ["packsolver = packsolver.cli:main"]},
)
