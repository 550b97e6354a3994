"""
Data, metrics, reporting and experiment runners
"""
