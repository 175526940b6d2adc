from setuptools import setup


setup(
    name="sqglab",
    version="0.1.0",
    license="MIT",
    description="Pseudo-spectral SQG and fractional drift-diffusion solver with level-set diagnostics",
    packages=['sqglab'],
    install_requires=['numpy', 'scipy', 'numba'],
    extras_require={
        'test': ['pytest', 'pytest-asyncio']},
    entry_points={
        'console_scripts': ['sqglab=sqglab.cli:main']},
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Mathematics'
    ]
)
