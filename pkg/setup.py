from setuptools import setup, find_packages

setup(
    name="harq-eh",
    version="1.0.0",
    description="Minimum expected HARQ-IR re-transmissions for RF energy harvesting receivers",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "pyyaml>=6.0",
        "python-dotenv>=1.0.0",
        "pydantic>=2.0.0",
        "rich>=13.0.0",
        "click>=8.0.0",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    entry_points={
        "console_scripts": [
            "harq-eh=harqeh.main:cli",
        ],
    },
)
