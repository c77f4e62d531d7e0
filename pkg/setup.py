from setuptools import Command, find_packages, setup

from cli import main
from scenarios import PRESETS, preset_path


class _CliCommand(Command):
    """
    Base for the setup.py shortcuts, each one forwards to a subcommand of the ris-ncds tool.
    """
    subcommand: str = ''
    user_options = [('scenario=', 'c', 'preset scenario ({})'.format(', '.join(PRESETS))),
                    ('seed=', 's', 'master seed'),
                    ('threads=', 't', 'worker threads')]

    def initialize_options(self) -> None:
        self.scenario = None
        self.seed = None
        self.threads = None

    def finalize_options(self) -> None:
        self.scenario = self.scenario or 'table2'
        self.threads = int(self.threads or 1)

    def arguments(self) -> list[str]:
        arguments = [self.subcommand, '--config', str(preset_path(self.scenario)), '--threads', str(self.threads)]
        if self.seed is not None:
            arguments += ['--seed', str(self.seed)]
        return arguments

    def run(self) -> None:
        code = main(self.arguments())
        if code != 0:
            raise SystemExit(code)


class RunSinr(_CliCommand):
    description = 'empirical and closed-form SINR of the non-coherent scheme against the transmit power'
    subcommand = 'sinr'


class RunSep(_CliCommand):
    description = 'symbol error probability of NCDS and CDS against the transmit power'
    subcommand = 'sep'


class RunEfficiency(_CliCommand):
    description = 'efficiency factor table of the coherent scheme'
    subcommand = 'efficiency'


class RunValidate(Command):
    description = 'run the built-in invariant checks'
    user_options = []

    def initialize_options(self) -> None:
        pass

    def finalize_options(self) -> None:
        pass

    def run(self) -> None:
        code = main(['validate'])
        if code != 0:
            raise SystemExit(code)


setup(
    name='ris-ncds',
    version='0.1.0',
    description='Link-level simulator of RS-assisted MIMO-OFDM uplinks with non-coherent and coherent detection',
    license='Apache 2.0 License',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering',
        'License :: OSI Approved :: Apache Software License',
        'Programming Language :: Python :: 3.9',
    ],
    keywords='reconfigurable surface, non-coherent detection, differential psk, mimo, ofdm',
    packages=find_packages(exclude=['tests', 'examples', 'examples.*']),
    include_package_data=True,
    package_data={'scenarios': ['*.toml']},
    python_requires='>=3.9.0',
    install_requires=[
        'numpy>=1.22.3',
        'scipy>=1.9.0',
        'pandas>=1.5.0',
        'toml>=0.10.2',
        'py-cpuinfo>=9.0.0',
    ],
    extras_require={'test': ['pytest>=7.0']},
    entry_points={'console_scripts': ['ris-ncds=cli:main']},
    zip_safe=False,
    cmdclass={
        'run_sinr': RunSinr,
        'run_sep': RunSep,
        'run_efficiency': RunEfficiency,
        'run_validate': RunValidate,
    },
)
