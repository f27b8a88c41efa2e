"""
Commandline interface sub-package
"""
