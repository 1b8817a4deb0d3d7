# noqa: D104
from setuptools import find_namespace_packages, setup

setup(
    name="scene-common-events",
    version="0.1.0",
    packages=find_namespace_packages(include=["scene_common*"]),
    namespace_packages=["scene_common"],
    install_requires=["pydantic==1.10.11"],
)
