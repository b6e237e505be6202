"""
Test suite for hybridred.
"""