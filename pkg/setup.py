from setuptools import setup

setup(
    packages=["fracising"],
    setup_requires=["cffi"],
    cffi_modules=["builder/build_fracising.py:ffibuilder"],
)
