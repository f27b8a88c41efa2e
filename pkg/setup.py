#!/usr/bin/env python

from pathlib import Path

from setuptools import find_packages, setup

_version = "0.1.0"

MODULE_PATH = Path(__file__).parent

if __name__ == "__main__":

    with open(MODULE_PATH / "README.md") as fh:
        readme_content = fh.read()
    setup(
        name="fastvg",
        description="Diffusion voice conversion and its one-step distillation",
        long_description_content_type="text/markdown",
        long_description=readme_content,
        version=_version,
        install_requires=[
            "numpy>=1.20",
            "click",
            "pandas",
            "tabulate",
            "tqdm",
            "monty",
            "torch>=2.1",
            "librosa>=0.10",
            "soundfile",
            "scipy",
        ],
        extras_require={"test": ["pytest"], "doc": ["mkdocs~=1.2", "mkdocs-material~=8.2.1"]},
        packages=find_packages(exclude=["tests"]),
        entry_points={"console_scripts": ["fastvg=fastvg.cli.cmd_fastvg:main"]},
    )
