"""cstdoa - compressive-sensing TDOA localization for distributed sensor arrays."""
__version__ = "1.0.0"
