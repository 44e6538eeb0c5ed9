# -*- coding: utf-8 -*-
"""bnlimits: sample-complexity lower bounds for Bayesian-network structure learning."""
