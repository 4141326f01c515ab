"""Monte Carlo laboratory for central limit theorems of L^p-valued empirical processes."""
__version__ = "0.1.0"
