"""
markermatch: EM alignment of partially labeled 2-D point configurations.
"""
__version__ = "1.0.0"
