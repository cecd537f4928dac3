"""Distributed power allocation and beamforming simulator for mmWave links.

Submodules:

* channel     - topologies and clustered MIMO channel realizations
* netmodel    - SINR, QoS functions, supply-power cost, efficiency
* game        - monotone generalized Nash power game engine
* beamforming - MMSE receive and the transmit beamformer family
* harness     - two-stage driver, Monte Carlo sweeps, fits
* cli         - simulate / sweep / verify commands
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
