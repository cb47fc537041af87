"""Decoders for quantum CSS codes on their Tanner graphs.

Modules: ``gf2`` (binary linear algebra), ``codes`` (surface and bivariate
bicycle codes), ``noise`` (depolarising sampler and datasets), ``bp``
(min-sum belief propagation), ``osd`` (OSD-0), ``gnn`` (message-passing
decoder), ``train`` (training loop) and ``bench`` (logical error rates,
speedup and thresholds). ``cli`` wires them into the ``tanner-gnn`` command.
"""

__version__ = "0.1.0"
