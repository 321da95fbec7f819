import io

from setuptools import setup


def _get_console_scripts():
    script_entries = [
        ('invsmooth', 'cli:main'),
    ]
    scripts_path = 'invsmooth'
    scripts = ['{} = {}.{}'.format(name, scripts_path, entry)
               for name, entry in script_entries]
    return scripts


def _get_requirements():
    with io.open("requirements.txt", encoding="utf-8") as requirements:
        return requirements.read().splitlines()


def main():
    classifiers = [
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Mathematics',
        'License :: OSI Approved :: Apache Software License',
        'Programming Language :: Python :: 3',
        'Operating System :: OS Independent',
    ]

    with io.open("README.md", encoding="utf-8") as readme:
        long_description = readme.read()

    setup(name="invsmooth",
          use_scm_version={'fallback_version': '1.0.0'},
          description="Invariant and multiplicative smoothing and batch "
                      "estimation on matrix Lie groups",
          long_description=long_description,
          long_description_content_type='text/markdown',
          license='Apache License, Version 2.0',
          classifiers=classifiers,
          keywords='state estimation, Lie groups, Kalman smoother, '
                   'Gauss-Newton',
          package_dir={'': 'python'},
          packages=['invsmooth'],
          include_package_data=True,
          package_data={
              'invsmooth': [
                  'resources/*.cfg',
              ],
          },
          zip_safe=False,
          python_requires='>=3.7',
          setup_requires=[
              'setuptools_scm',
          ],
          tests_require=[
              'pytest',
          ],
          install_requires=_get_requirements(),
          entry_points={
              'console_scripts': _get_console_scripts(),
          },
          )


if __name__ == '__main__':
    main()
