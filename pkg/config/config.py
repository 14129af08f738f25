"""
Influence Abstraction Toolkit - Configuration Management
Centralized configuration for the engine, the CLI and the test suite
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Base configuration class"""

    # Application Settings
    APP_ENV = os.getenv('APP_ENV', 'development')

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('LOG_FILE', '')

    # Numerical Tolerances
    DERIVED_TOLERANCE = float(os.getenv('DERIVED_TOLERANCE', 1e-9))
    EXACT_TOLERANCE = float(os.getenv('EXACT_TOLERANCE', 1e-12))
    TIE_TOLERANCE = float(os.getenv('TIE_TOLERANCE', 1e-12))

    # Resource Caps
    CAP_AOHS = int(os.getenv('CAP_AOHS', 10 ** 6))
    CAP_TRAJECTORIES = int(os.getenv('CAP_TRAJECTORIES', 10 ** 7))

    # Execution
    JOBS = int(os.getenv('JOBS', 1))

    # Report Settings
    REPORT_FORMAT = os.getenv('REPORT_FORMAT', 'human')
    REPORT_VERSION = 1

    @classmethod
    def engine_settings(cls) -> dict:
        """Numeric settings handed to the engine modules"""
        return {
            'derived_tolerance': cls.DERIVED_TOLERANCE,
            'exact_tolerance': cls.EXACT_TOLERANCE,
            'tie_tolerance': cls.TIE_TOLERANCE,
            'cap_aohs': cls.CAP_AOHS,
            'cap_trajectories': cls.CAP_TRAJECTORIES,
            'jobs': cls.JOBS,
        }


class DevelopmentConfig(Config):
    """Development configuration"""


class ProductionConfig(Config):
    """Production configuration"""
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'WARNING')


class TestingConfig(Config):
    """Testing configuration"""
    LOG_LEVEL = 'WARNING'
    LOG_FILE = ''


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}


def get_config():
    """Get configuration based on environment"""
    return config.get(os.getenv('APP_ENV', Config.APP_ENV), config['default'])
