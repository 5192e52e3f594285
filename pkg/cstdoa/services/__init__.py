"""Signal, sensing and estimation services."""
