"""Package initialization for src"""

# Empty init - allows imports from src.core, src.tensor, src.cloud, ...
