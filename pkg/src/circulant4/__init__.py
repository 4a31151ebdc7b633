"""Classification of almost product manifolds induced by a circulant structure.

A 4-dimensional Riemannian manifold ``(M, g)`` carries a structure ``Q`` with
``Q^4 = id`` that is an isometry of ``g``; ``P = Q^2`` is then an almost product
structure. This package evaluates ``nabla Q``, ``nabla P``, the tensors
``F`` and ``F-bar`` and the curvature from symbolic metric data, and checks
class conditions and identities at sampled points.
"""

__version__ = "0.1.0"
