"""
convsim tests
"""
