"""
Retina Locator - Package setup configuration
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="retina-locator",
    version="0.1.0",
    author="Retina Locator Team",
    description="Optic disc and fovea localization in fundus images with a relation-augmented detector",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    package_data={"retina_locator": ["templates/*.j2"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Medical Science Apps.",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24.0",
        "python-dotenv>=1.0.0",
        "pydantic>=2.5.0",
        "Pillow>=10.0.0",
        "jinja2>=3.1.2",
        "pyyaml>=6.0.1",
    ],
    extras_require={
        "test": ["pytest>=7.4.0"],
    },
    entry_points={
        "console_scripts": [
            "retina-locator=retina_locator.cli:main",
        ],
    },
)
