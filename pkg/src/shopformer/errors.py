"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ShopformerError(Exception):
    exit_code = 1
    code = "ERROR"


class ConfigError(ShopformerError, ValueError):
    exit_code = 2
    code = "CONFIG_ERROR"


class DataError(ShopformerError, ValueError):
    exit_code = 3
    code = "DATA_ERROR"


class UndefinedMetricError(DataError):
    code = "UNDEFINED_METRIC"


class ContractError(ShopformerError, RuntimeError):
    exit_code = 4
    code = "CONTRACT_VIOLATION"


class ShapeError(ContractError, ValueError):
    code = "SHAPE_ERROR"


class PairingError(ContractError):
    """A transformer checkpoint was paired with a tokenizer it was not trained on."""
    code = "PAIRING_ERROR"
