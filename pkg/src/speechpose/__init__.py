"""Speaker-specific speech-to-gesture translation.

Raw speech audio in, temporal stacks of 2D arm and hand keypoints out,
plus the training, evaluation, baseline, and gesture-dictionary
tooling around that core model.
"""

__version__ = "0.1.0"
