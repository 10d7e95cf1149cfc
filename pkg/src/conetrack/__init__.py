"""Cone-track racing workbench: simulator, SAC/AIRL trainers, expert, metrics."""

__version__ = "0.1.0"
