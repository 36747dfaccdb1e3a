from __future__ import annotations


class CoopEdlError(Exception):
    pass


class ShapeError(CoopEdlError, ValueError):
    pass


class ParameterError(CoopEdlError, ValueError):
    def __init__(self, name: str, message: str) -> None:
        super().__init__(f"{name} {message}")
        self.name = name


class LayerIndexError(CoopEdlError, IndexError):
    pass


class NonFiniteError(CoopEdlError, ArithmeticError):
    pass


class SvdConvergenceError(CoopEdlError):
    def __init__(self, residual: float, sweeps: int) -> None:
        super().__init__(f"SVD did not converge after {sweeps} sweeps (residual {residual:.3e})")
        self.residual = residual
        self.sweeps = sweeps


class LayerUpdateError(NonFiniteError):
    def __init__(self, layer: int) -> None:
        super().__init__(f"non-finite weights after update in layer {layer}")
        self.layer = layer


class NonFiniteTdError(NonFiniteError):
    def __init__(self, sample_index: int) -> None:
        super().__init__(f"non-finite TD value for batch sample {sample_index}")
        self.sample_index = sample_index


class EnvError(CoopEdlError):
    pass


class EmptyBufferError(CoopEdlError):
    pass


class ConfigError(CoopEdlError):
    def __init__(self, message: str, key: str | None = None) -> None:
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
