from setuptools import setup, find_packages


setup(
    name="captiongan",
    version="0.3.0",
    license="MIT",
    packages=find_packages(exclude=["ez_setup", "examples", "tests"]),
    namespace_packages=[],
    package_data={"captiongan": ["**/*.yml", "**/*.yaml"]},
    zip_safe=False,
    python_requires=">=3.8",
    install_requires=[
        "torch >= 1.12",
        "transformers >= 4.20",
        "numpy",
        "nltk",
        "pillow",
        "sqlalchemy >= 1.4",
        "requests[security] >= 2.25.0, < 3.0.0",
        "structlog",
        "colorama",
        "click",
        "pyyaml",
        "banal",
        "normality",
    ],
    extras_require={
        "dev": [
            "pytest",
            "pycocoevalcap",
            "sphinx",
            "bump2version",
            "wheel>=0.29.0",
            "black",
            "flake8>=2.6.0",
            "sphinx-rtd-theme",
        ],
    },
    entry_points={
        "console_scripts": [
            "captiongan = captiongan.cli:main",
            "cgan = captiongan.cli:main",
        ],
    },
)
