from setuptools import setup, find_packages

setup(
    name="eda_lab",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "networkx>=2.6",
        "colorama>=0.4.4",
        "typing_extensions>=4.0.0",
    ],
    extras_require={"test": ["pytest>=7.0"]},
    entry_points={"console_scripts": ["eda-lab=edalab.cli:main"]},
    python_requires=">=3.8",
    description="Edges dissolution approximation for separable temporal ERGMs",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
