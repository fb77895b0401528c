"""Hand-differentiated two-branch network trained on synthetic motion clips."""
