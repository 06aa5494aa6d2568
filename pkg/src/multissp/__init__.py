"""Economic security of services secured by multiple shared security providers (SSPs).

Compares an isolated architecture (one consensus pool per SSP) with a shared
one (a single pool spanning every SSP): security verdicts, attack and bribery
costs, maximin stake allocation, price risk and Monte Carlo studies.
"""

__version__ = "0.1.0"
