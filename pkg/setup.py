from setuptools import setup

setup(
    name="rssiforge",
    version="1.0.0",
    py_modules=[
        "augmenters",
        "config",
        "congan_engine",
        "dataset_manager",
        "exceptions",
        "experiment_runner",
        "house_simulator",
        "localisation_evaluator",
        "main",
        "pipeline_runner",
        "preprocessor",
        "report_generator",
        "rssi_types",
        "transfer_learning",
    ],
    install_requires=[
        "numpy",
        "pandas",
        "scipy",
        "scikit-learn",
        "imbalanced-learn",
        "torch",
        "pydantic>=2",
        "python-dotenv",
        "matplotlib",
        "seaborn",
    ],
    entry_points={"console_scripts": ["rssiforge=main:main"]},
    python_requires=">=3.9",
)
