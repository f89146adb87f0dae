"""Network architecture schema."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Activation(str, Enum):
    """Hidden-layer nonlinearity."""

    RELU = "relu"
    TANH = "tanh"


class NetworkSpec(BaseModel):
    """Fully connected network shape. The final layer is always linear."""

    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(ge=1)
    hidden_layers: list[int] = Field(default_factory=list)
    output_dim: int = Field(ge=1)
    activation: Activation = Activation.RELU

    @field_validator("hidden_layers")
    @classmethod
    def _widths_positive(cls, widths: list[int]) -> list[int]:
        if any(width < 1 for width in widths):
            raise ValueError("hidden layer widths must be >= 1")
        return widths

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_layers, self.output_dim]

    @property
    def parameter_count(self) -> int:
        sizes = self.layer_sizes
        return sum(n_out * (n_in + 1) for n_in, n_out in zip(sizes[:-1], sizes[1:], strict=True))
