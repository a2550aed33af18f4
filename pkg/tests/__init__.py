"""
Ruelle Test Suite
"""
