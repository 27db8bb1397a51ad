"""Skill-based reinforcement learning from human evaluative feedback."""

__version__ = "0.1.0"
