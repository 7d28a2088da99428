"""
Setup script for convsim
"""

from setuptools import setup, find_packages

# Read README
with open('README.md', 'r', encoding='utf-8') as f:
    long_description = f.read()

# Read version
version = {}
with open('convsim/__init__.py', 'r') as f:
    for line in f:
        if line.startswith('__version__'):
            exec(line, version)

setup(
    name='convsim',
    version=version['__version__'],
    author='',
    author_email='',
    description='Parameterized LLM conversation generation and evaluation for entrepreneur-adviser dialogues',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*', 'docs']),
    package_data={
        'convsim': ['data/*.json', 'templates/*'],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Topic :: Software Development :: Libraries :: Python Modules',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],
    python_requires='>=3.9',
    install_requires=[
        'requests>=2.25.0',
        'numpy>=1.21',
        'pandas>=1.4',
        'tabulate>=0.8.9',
        'tqdm>=4.60',
        'pydantic>=2.0',
        'nltk>=3.6',
    ],
    extras_require={
        'readability': [
            'textstat>=0.7',
        ],
        'embeddings': [
            'sentence-transformers>=2.2',
        ],
        'ner': [
            'spacy>=3.4',
        ],
        'dev': [
            'pytest>=6.0',
            'pytest-cov>=2.0',
            'black>=21.0',
            'flake8>=3.9',
            'mypy>=0.910',
        ],
    },
    entry_points={
        'console_scripts': [
            'sim=convsim.cli:main',
        ],
    },
    keywords='llm synthetic-conversations evaluation llm-as-judge topic-drift entropy',
    include_package_data=True,
    zip_safe=False,
)
