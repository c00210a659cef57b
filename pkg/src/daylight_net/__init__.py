"""Illuminance prediction from window images plus time/position features.

Subpackages and modules:

* ``nn``         -- minimal tensor autograd, layers, loss, Adam
* ``features``   -- image preprocessing, temporal encoding, standardization
* ``dataset``    -- corpus loading, cleaning, deterministic split
* ``synthgen``   -- deterministic synthetic daylight corpus generator
* ``model``      -- multimodal CNN-MLP assembly and checkpoint format
* ``trainer``    -- training loop, early stopping, configuration sweep
* ``evaluation`` -- metrics, correlation analysis, plot-ready exports
* ``cli``        -- command-line entry point
"""

__version__ = "0.1.0"
