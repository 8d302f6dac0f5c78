import structlog

from harpbd.errors import ConfigurationError
from harpbd.graph import BodyGraph
from harpbd.models.base import BaseStrategy, TrainConfig
from harpbd.nn import ModelSpec

logger = structlog.get_logger()


class StrategyRegistry:
    _strategies: dict[str, type[BaseStrategy]] = {}

    @classmethod
    def register(cls, name: str, strategy_class: type[BaseStrategy]) -> None:
        if name in cls._strategies:
            logger.warning(f"Strategy {name} already registered, overwriting")
        strategy_class.name = name
        cls._strategies[name] = strategy_class
        logger.debug(f"Registered training strategy: {name}")

    @classmethod
    def get_strategy_class(cls, name: str) -> type[BaseStrategy] | None:
        return cls._strategies.get(name)

    @classmethod
    def create(
        cls, config: TrainConfig, har_spec: ModelSpec, pbd_spec: ModelSpec, graph: BodyGraph
    ) -> BaseStrategy:
        strategy_class = cls.get_strategy_class(config.strategy)
        if strategy_class is None:
            raise ConfigurationError(
                f"Strategy {config.strategy} not registered; known: {cls.list_strategies()}"
            )
        return strategy_class(config, har_spec, pbd_spec, graph)

    @classmethod
    def list_strategies(cls) -> list[str]:
        return list(cls._strategies.keys())


def training_strategy(name: str):
    def decorator(cls: type[BaseStrategy]):
        StrategyRegistry.register(name, cls)
        return cls

    return decorator
