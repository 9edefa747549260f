"""
Test suite for the continuous-time thermodynamic formalism toolkit
"""
