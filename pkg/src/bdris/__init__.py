"""Beyond-diagonal RIS simulation, optimization and Virtual VNA estimation."""
