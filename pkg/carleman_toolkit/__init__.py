"""
Carleman Toolkit Package.

Regularised continuation of couple-stress elasticity fields from Cauchy data
given on part of the boundary.
"""
__version__ = "1.0.0"
