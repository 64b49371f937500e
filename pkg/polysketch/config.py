"""
Configuration management for polysketch
Loads process-wide defaults from config.ini (allocator, GP, experiment, logging, server)
"""
import os
import configparser
from typing import Dict, Any, Optional


CONFIG_ENV_VAR = 'POLYSKETCH_CONFIG'


class Config:
    """Configuration manager for polysketch"""

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize configuration

        Args:
            config_path: Path to config.ini file. When omitted, $POLYSKETCH_CONFIG
                or ./config.ini in the project root is used, and a missing file
                falls back to built-in defaults.
        """
        explicit = config_path is not None or CONFIG_ENV_VAR in os.environ
        if config_path is None:
            config_path = os.environ.get(CONFIG_ENV_VAR) or os.path.join(
                os.path.dirname(os.path.dirname(__file__)),
                'config.ini'
            )

        self.config_path = config_path
        self.config = configparser.ConfigParser()

        # Load configuration
        if os.path.exists(config_path):
            self.config.read(config_path)
            self.loaded = True
        elif explicit:
            raise FileNotFoundError(
                f"Configuration file not found: {config_path}\n"
                "Copy config.ini.example to config.ini or unset "
                f"{CONFIG_ENV_VAR}."
            )
        else:
            self.loaded = False

    # Maclaurin allocator
    @property
    def p_min(self) -> int:
        """Smallest truncation degree tried by the extended allocator"""
        return self.config.getint('maclaurin', 'p_min', fallback=2)

    @property
    def p_max(self) -> int:
        """Largest truncation degree tried by the extended allocator"""
        return self.config.getint('maclaurin', 'p_max', fallback=10)

    @property
    def subsample(self) -> int:
        """Points used for the objective tables (m = min(subsample, N))"""
        return self.config.getint('maclaurin', 'subsample', fallback=5000)

    @property
    def random_c(self) -> float:
        """Base c of the random Maclaurin degree measure"""
        return self.config.getfloat('maclaurin', 'random_c', fallback=2.0)

    @property
    def constant_in_budget(self) -> bool:
        """Whether the sqrt(a_0) slot counts toward the feature budget"""
        return self.config.getboolean('maclaurin', 'constant_in_budget', fallback=True)

    # Gaussian processes
    @property
    def jitter_scale(self) -> float:
        """Initial jitter relative to trace(B)/D"""
        return self.config.getfloat('gp', 'jitter_scale', fallback=1e-10)

    @property
    def jitter_retries(self) -> int:
        """Number of x10 jitter escalations before giving up"""
        return self.config.getint('gp', 'jitter_retries', fallback=3)

    @property
    def n_mc(self) -> int:
        """Latent samples per test point for classification"""
        return self.config.getint('gp', 'n_mc', fallback=256)

    @property
    def dirichlet_alpha(self) -> float:
        """Label smoothing of the Dirichlet transform"""
        return self.config.getfloat('gp', 'dirichlet_alpha', fallback=0.01)

    @property
    def bias_correction(self) -> bool:
        """Add k(x,x) - E[k_hat(x,x)] to predictive variances"""
        return self.config.getboolean('gp', 'bias_correction', fallback=False)

    # Experiments
    @property
    def test_fraction(self) -> float:
        """Held-out fraction of the per-seed train/test split"""
        return self.config.getfloat('experiment', 'test_fraction', fallback=0.1)

    @property
    def workers(self) -> int:
        """Worker threads used to run seeds in parallel"""
        return self.config.getint('experiment', 'workers', fallback=1)

    # Logging
    @property
    def log_level(self) -> str:
        """Root logger level"""
        return self.config.get('logging', 'level', fallback='INFO').upper()

    @property
    def log_format(self) -> str:
        """Root logger format string"""
        return self.config.get(
            'logging', 'format',
            fallback='%(asctime)s %(levelname)s %(name)s: %(message)s',
            raw=True,
        )

    # Server Configuration
    @property
    def server_host(self) -> str:
        """Get server host"""
        return self.config.get('server', 'host', fallback='127.0.0.1')

    @property
    def server_port(self) -> int:
        """Get server port"""
        return self.config.getint('server', 'port', fallback=8000)

    def as_dict(self) -> Dict[str, Any]:
        """
        Get all numerical defaults as a dictionary

        Returns:
            Dictionary keyed by setting name
        """
        return {
            'p_min': self.p_min,
            'p_max': self.p_max,
            'subsample': self.subsample,
            'random_c': self.random_c,
            'constant_in_budget': self.constant_in_budget,
            'jitter_scale': self.jitter_scale,
            'jitter_retries': self.jitter_retries,
            'n_mc': self.n_mc,
            'dirichlet_alpha': self.dirichlet_alpha,
            'bias_correction': self.bias_correction,
            'test_fraction': self.test_fraction,
            'workers': self.workers,
        }

    def print_config(self):
        """Print current configuration (for debugging)"""
        print("polysketch Configuration:")
        print("=" * 50)
        print(f"  Source: {self.config_path if self.loaded else '(built-in defaults)'}")
        print("\n[Maclaurin]")
        print(f"  Degree range: {self.p_min}..{self.p_max}")
        print(f"  Subsample: {self.subsample}")
        print(f"  Random Maclaurin c: {self.random_c}")
        print(f"  Constant slot in budget: {self.constant_in_budget}")
        print("\n[GP]")
        print(f"  Jitter: {self.jitter_scale} x10 up to {self.jitter_retries} times")
        print(f"  MC samples: {self.n_mc}")
        print(f"  Dirichlet alpha: {self.dirichlet_alpha}")
        print(f"  Bias correction: {self.bias_correction}")
        print("\n[Experiment]")
        print(f"  Test fraction: {self.test_fraction}")
        print(f"  Workers: {self.workers}")
        print("\n[Server Configuration]")
        print(f"  Host: {self.server_host}")
        print(f"  Port: {self.server_port}")
        print("=" * 50)


# Global config instance
_config = None


def get_config(config_path: Optional[str] = None) -> Config:
    """
    Get or create the global configuration instance

    Args:
        config_path: Path to config.ini file (optional)

    Returns:
        Config instance
    """
    global _config
    if _config is None or (config_path is not None and config_path != _config.config_path):
        _config = Config(config_path)
    return _config
