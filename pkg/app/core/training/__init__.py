"""
Training data, the optimization loop and checkpoints.
"""
