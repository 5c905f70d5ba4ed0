"""
Tests for flexfem; desk-scale problems only.
"""
