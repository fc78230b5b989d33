"""Knee joint area localisation on plain radiographs.

Anatomy-driven square proposals per leg, scored with HoG features and a
linear SVM.
"""

__version__ = "0.1.0"
