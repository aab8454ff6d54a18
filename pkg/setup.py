__version__ = '0.1.0'

from setuptools import setup

setup(
    name='pekerisrefocus',
    packages=['pekerisrefocus'],
    package_dir={'pekerisrefocus': 'pekerisrefocus'},
    package_data={'pekerisrefocus': ['*.html', '*.svg']},
    version=__version__,
    description='Mode coupling, radiation loss and time-reversal refocusing in a randomly perturbed Pekeris '
                'waveguide',
    license='MIT',
    keywords=['waveguide', 'mode coupling', 'time reversal', 'random media', 'diffusion'],
    classifiers=[],
    python_requires='>=3.8',
    install_requires=['numpy>=1.20',
                      'scipy>=1.7',
                      'Jinja2>=3.0'],
    extras_require={'test': ['pytest>=6']},
    entry_points={'console_scripts': ['pekerisrefocus = pekerisrefocus.cli:main']},
)
