"""pamlab: desk-scale laboratory for lattice heat flow in random potential.

Modules
-------
geometry     exact l1-ball combinatorics, canonical site enumeration
randomness   counter-based, order-independent random streams
potential    potential fields: dense sampling, exceedance sampling, order stats
solver       normalized log-domain integration of the lattice Cauchy problem
oracle       exact small-instance oracles (matrix exponential, path sums)
variational  growth indices and penalized-potential maximizers
limits       Monte-Carlo ensembles and limit-law tests
config, cli  experiment configuration and batch front-end
"""

__version__ = "0.1.0"
