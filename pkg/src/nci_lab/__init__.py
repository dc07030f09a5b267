"""Non-commutative invariance lab: autodiff, synthetic domains, adversarial objectives,
divergence estimates and symbolic operator checks."""

__version__ = "0.1.0"
