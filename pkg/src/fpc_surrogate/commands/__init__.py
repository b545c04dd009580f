from fpc_surrogate.commands.benchmark_commands import benchmark
from fpc_surrogate.commands.dataset_commands import gen_dataset
from fpc_surrogate.commands.screen_commands import screen
from fpc_surrogate.commands.tools_commands import (
    export_spectra,
    gradcheck,
    schemas,
)
from fpc_surrogate.commands.train_commands import cross_validate, train

__all__ = (
    "benchmark",
    "cross_validate",
    "export_spectra",
    "gen_dataset",
    "gradcheck",
    "schemas",
    "screen",
    "train",
)
