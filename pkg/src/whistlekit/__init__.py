"""whistlekit: dolphin whistle detection pipeline (DSP, CNN, baseline, eval)."""

__version__ = "0.1.0"
