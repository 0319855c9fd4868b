import setuptools
import os

readme = os.path.join(os.path.split(os.path.abspath(__file__))[0], "README.md")
with open(readme, "r", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name="wqr",
    version="0.1",
    author="wqr developers",
    description="Finite depth weakly quasiregular constructions: radial stretches, packing trees and their audits",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    package_dir={"wqr": "wqr"},
    packages=["wqr"],
    install_requires=["torch>=1.9.0", "numpy>=1.19.0", "scipy>=1.6.0", "fire>=0.4.0", "tqdm>=4.62.2", "pillow>=8.3.0"],
    entry_points={"console_scripts": ["wqr=wqr.__main__:main"]},
    python_requires=">=3.8",
)
