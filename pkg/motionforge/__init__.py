"""Motion representation and temporal modeling toolkit."""
