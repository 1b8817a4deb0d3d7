# noqa: D104
from setuptools import find_packages, setup

setup(
    name="eam-scene-classifier",
    packages=find_packages(exclude=["tests", "tests.*"]),
    version="0.1.0",
)
