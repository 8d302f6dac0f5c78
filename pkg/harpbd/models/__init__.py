import harpbd.models.strategies  # noqa: F401  registers the training strategies
