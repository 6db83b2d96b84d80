"""Streaming blockwise encoder with circular layer skipping and early exit.

The heavy lifting lives in the compiled extension; this package re-exports
its surface.
"""

from spiralformer._core import (  # noqa: F401
    BlockConfig,
    BlockOutput,
    BlockPlan,
    ConfigError,
    EncoderWeights,
    SpiralConfig,
    StateError,
    TokenEmission,
    add_positional_encoding,
    combined_loss,
    computed_layers,
    ctc_head_forward,
    ctc_loss,
    ctc_loss_grad,
    exit_layer,
    greedy_decode,
    layer_forward,
    load_weights,
    max_theoretical_latency_ms,
    percentile,
    plan_blocks,
    random_weights,
    run_utterance,
    save_weights,
    shift_index,
    trace_dependencies,
    __version__,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
