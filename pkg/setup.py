from setuptools import setup

# metadata, requirements and the console script live in setup.cfg
setup(
    setup_requires=['pbr>=2.0'],
    python_requires='>=3.9',
    pbr=True,
)
