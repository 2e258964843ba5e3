"""Stop-and-go wave damping with a DDPG-controlled vehicle in a simulated platoon."""

__version__ = "0.1.0"
